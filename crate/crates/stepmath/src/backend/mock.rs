//! Deterministic scripted backend for tests and offline runs.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::{BackendError, CompletionBackend, CompletionRequest, Transcript};

/// Replays scripted responses. Requests are matched against routes first
/// (substring of the prompt, in registration order), then fall back to a
/// global FIFO script. Transcripts carry zero latency so outputs are
/// byte-stable across runs.
pub struct MockBackend {
    state: Mutex<State>,
    calls: AtomicUsize,
}

#[derive(Default)]
struct State {
    script: VecDeque<String>,
    routes: Vec<(String, VecDeque<String>)>,
    consumed: usize,
}

impl Default for MockBackend {
    fn default() -> Self {
        Self::new()
    }
}

impl MockBackend {
    pub fn new() -> Self {
        MockBackend {
            state: Mutex::new(State::default()),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn scripted<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let backend = Self::new();
        for response in responses {
            backend.push(response);
        }
        backend
    }

    /// Appends a response to the global FIFO script.
    pub fn push(&self, response: impl Into<String>) {
        self.state.lock().unwrap().script.push_back(response.into());
    }

    /// Registers responses consumed (FIFO) by requests whose prompt contains
    /// `needle`. Routes take precedence over the global script.
    pub fn route<I, S>(&self, needle: impl Into<String>, responses: I)
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let queue: VecDeque<String> = responses.into_iter().map(Into::into).collect();
        self.state.lock().unwrap().routes.push((needle.into(), queue));
    }

    /// Total `complete` invocations so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl CompletionBackend for MockBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<Transcript, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let mut state = self.state.lock().unwrap();

        let mut response = None;
        for (needle, queue) in state.routes.iter_mut() {
            if request.prompt.contains(needle.as_str()) {
                if let Some(r) = queue.pop_front() {
                    response = Some(r);
                    break;
                }
            }
        }
        let response = match response.or_else(|| state.script.pop_front()) {
            Some(r) => r,
            None => {
                return Err(BackendError::ScriptExhausted {
                    consumed: state.consumed,
                })
            }
        };
        state.consumed += 1;

        Ok(Transcript {
            request: request.clone(),
            raw_response: response,
            latency_ms: 0,
            retry_count: 0,
            provider_metadata: Default::default(),
        })
    }
}
