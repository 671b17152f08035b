//! Benchmark harness: dataset ingestion, gold-score computation, the parallel
//! resumable runner, solution generation, and the metric suite.

mod fixtures;
mod metrics;

pub use fixtures::synth_fixtures;
pub use metrics::{
    compute_metrics, render_markdown, MetricValues, MetricsError, MetricsReport, SliceKey,
};

use std::collections::{HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::agent::{run_evaluation, EvalConfig, EvalMode, EvaluationResult};
use crate::aggregate::{aggregate_score, binary_score, AggregationPolicy};
use crate::backend::{CompletionBackend, CompletionRequest, VerdictStep};
use crate::core::{
    CategoryCatalog, Difficulty, GoldRecord, LabeledStep, PrimaryCategory, Problem, ProblemType,
    ScoredSolution, SolutionOrigin, StepLabel,
};
use crate::errortree::{build_forest, ErrorChain};
use crate::prompts::{
    render_generation_input, PromptLanguage, GENERATE_CALCULATION_EN, GENERATE_CALCULATION_ZH,
    GENERATE_PROOF_OPEN_EN, GENERATE_PROOF_OPEN_ZH,
};

pub const DATASET_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error on {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("line {line}: malformed JSON: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("line {line} (id {id}): {message}")]
    InvalidRecord {
        line: usize,
        id: String,
        message: String,
    },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("parallelism must be >= 1")]
    InvalidParallelism,
    #[error("record {id}: {message}")]
    Record { id: String, message: String },
}

/// One annotated reasoning step as stored in the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedStep {
    pub index: usize,
    pub text: String,
    pub label: StepLabel,
}

fn default_schema_version() -> u32 {
    DATASET_SCHEMA_VERSION
}

/// One benchmark instance: a problem, one model's solution, and (when
/// annotated) the human step labels and gold grades. Unknown fields are
/// preserved opaquely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub id: String,
    pub statement: String,
    pub problem_type: ProblemType,
    pub category_primary: PrimaryCategory,
    pub category_secondary: String,
    pub difficulty: Difficulty,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_answer: Option<String>,
    pub generator: String,
    pub solution_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation: Option<Vec<AnnotatedStep>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<GoldRecord>,
    #[serde(flatten)]
    pub extra: serde_json::Map<String, Value>,
}

impl DatasetRecord {
    pub fn problem(&self) -> Problem {
        Problem {
            id: self.id.clone(),
            statement: self.statement.clone(),
            problem_type: self.problem_type,
            category_primary: self.category_primary,
            category_secondary: self.category_secondary.clone(),
            difficulty: self.difficulty,
            constraint: self.constraint.clone(),
            reference_answer: self.reference_answer.clone(),
        }
    }

    pub fn slice_key(&self) -> SliceKey {
        SliceKey {
            problem_type: self.problem_type,
            category_primary: self.category_primary,
            difficulty: self.difficulty,
        }
    }

    /// The annotation as a validated solution, when present.
    pub fn annotated_solution(&self) -> Option<Result<ScoredSolution, DatasetError>> {
        let annotation = self.annotation.as_ref()?;
        let steps: Vec<LabeledStep> = annotation
            .iter()
            .map(|s| LabeledStep {
                index: s.index,
                text: s.text.clone(),
                label: s.label,
            })
            .collect();
        Some(
            ScoredSolution::new(
                self.id.clone(),
                self.generator.clone(),
                steps,
                SolutionOrigin::HumanAnnotation,
            )
            .map_err(|e| DatasetError::Record {
                id: self.id.clone(),
                message: e.to_string(),
            }),
        )
    }
}

/// Recomputes the gold grades from the human annotation under the default
/// (frozen) aggregation policy.
pub fn gold_score(record: &DatasetRecord) -> Result<GoldRecord, DatasetError> {
    let solution = record
        .annotated_solution()
        .ok_or_else(|| DatasetError::Record {
            id: record.id.clone(),
            message: "gold computation requires an annotation".to_string(),
        })??;
    let scores = solution.scores();
    let policy = AggregationPolicy::default();
    let score =
        aggregate_score(record.problem_type, &scores, &policy).map_err(|e| DatasetError::Record {
            id: record.id.clone(),
            message: e.to_string(),
        })?;
    let binary =
        binary_score(record.problem_type, &scores, score).map_err(|e| DatasetError::Record {
            id: record.id.clone(),
            message: e.to_string(),
        })?;
    GoldRecord::new(score, binary).map_err(|e| DatasetError::Record {
        id: record.id.clone(),
        message: e.to_string(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LoadMode {
    /// Any invariant violation aborts the load.
    #[default]
    Strict,
    /// Violating records are skipped and reported.
    Lenient,
}

/// A skipped record with the reason, in lenient mode.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadIssue {
    pub line: usize,
    pub id: String,
    pub message: String,
}

#[derive(Debug, Default)]
pub struct LoadedDataset {
    pub records: Vec<DatasetRecord>,
    pub skipped: Vec<LoadIssue>,
}

pub fn load_dataset(path: &Path, mode: LoadMode) -> Result<LoadedDataset, DatasetError> {
    load_dataset_with(path, mode, &CategoryCatalog::default())
}

/// Loads and validates a JSONL dataset. Malformed JSON always aborts with the
/// line number; semantic violations follow the load mode.
pub fn load_dataset_with(
    path: &Path,
    mode: LoadMode,
    catalog: &CategoryCatalog,
) -> Result<LoadedDataset, DatasetError> {
    let file = File::open(path).map_err(|e| DatasetError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let reader = BufReader::new(file);

    let mut loaded = LoadedDataset::default();
    let mut seen: HashSet<(String, String)> = HashSet::new();
    for (line_index, line) in reader.lines().enumerate() {
        let line_number = line_index + 1;
        let line = line.map_err(|e| DatasetError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: DatasetRecord =
            serde_json::from_str(&line).map_err(|e| DatasetError::MalformedLine {
                line: line_number,
                message: e.to_string(),
            })?;

        match validate_record(&record, catalog, &mut seen) {
            Ok(()) => loaded.records.push(record),
            Err(message) => match mode {
                LoadMode::Strict => {
                    return Err(DatasetError::InvalidRecord {
                        line: line_number,
                        id: record.id,
                        message,
                    })
                }
                LoadMode::Lenient => loaded.skipped.push(LoadIssue {
                    line: line_number,
                    id: record.id,
                    message,
                }),
            },
        }
    }
    Ok(loaded)
}

fn validate_record(
    record: &DatasetRecord,
    catalog: &CategoryCatalog,
    seen: &mut HashSet<(String, String)>,
) -> Result<(), String> {
    if record.schema_version != DATASET_SCHEMA_VERSION {
        return Err(format!(
            "unsupported schema_version {} (expected {DATASET_SCHEMA_VERSION})",
            record.schema_version
        ));
    }
    if !seen.insert((record.id.clone(), record.generator.clone())) {
        return Err(format!(
            "duplicate (id, generator) pair ({}, {})",
            record.id, record.generator
        ));
    }
    record.problem().validate(catalog).map_err(|e| e.to_string())?;
    if record.solution_text.trim().is_empty() {
        return Err("solution_text is empty".to_string());
    }
    if record.annotation.is_some() {
        let recomputed = gold_score(record).map_err(|e| e.to_string())?;
        if let Some(stored) = record.gold {
            if stored != recomputed {
                return Err(format!(
                    "stored gold ({}/{}) disagrees with recomputation ({}/{})",
                    stored.score(),
                    stored.binary(),
                    recomputed.score(),
                    recomputed.binary()
                ));
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Runner
// ---------------------------------------------------------------------------

pub const RESULT_SCHEMA_VERSION: u32 = 1;

/// One line of the results JSONL. Successful evaluations fill the score
/// fields; failures carry `error` instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultLine {
    pub schema_version: u32,
    pub id: String,
    pub mode: EvalMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_score: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binary: Option<u8>,
    #[serde(default)]
    pub score_mismatch: bool,
    #[serde(default)]
    pub chains: Vec<ErrorChain>,
    #[serde(default)]
    pub diagnostics: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript_path: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub steps: Vec<VerdictStep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reported_final: Option<u8>,
    #[serde(default)]
    pub bypass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ResultLine {
    fn from_outcome(
        id: &str,
        mode: EvalMode,
        outcome: &Result<EvaluationResult, String>,
        transcript_path: Option<String>,
    ) -> Self {
        match outcome {
            Ok(result) => ResultLine {
                schema_version: RESULT_SCHEMA_VERSION,
                id: id.to_string(),
                mode,
                final_score: Some(result.final_score),
                binary: result.binary,
                score_mismatch: result.score_mismatch,
                chains: result.chains.clone(),
                diagnostics: result.diagnostics.clone(),
                transcript_path,
                steps: result.steps.clone(),
                reported_final: result.reported_final,
                bypass: result.bypass,
                error: None,
            },
            Err(message) => ResultLine {
                schema_version: RESULT_SCHEMA_VERSION,
                id: id.to_string(),
                mode,
                final_score: None,
                binary: None,
                score_mismatch: false,
                chains: Vec::new(),
                diagnostics: Vec::new(),
                transcript_path,
                steps: Vec::new(),
                reported_final: None,
                bypass: false,
                error: Some(message.clone()),
            },
        }
    }

    /// Rebuilds an in-memory outcome. Resumed results have no transcripts in
    /// memory; the forest is rebuilt from the stored chains.
    fn into_outcome(self) -> RecordOutcome {
        let id = self.id.clone();
        let outcome = match self.error {
            Some(message) => Err(message),
            None => {
                let (forest, _) = build_forest(&self.chains);
                Ok(EvaluationResult {
                    mode: self.mode,
                    final_score: self.final_score.unwrap_or(0),
                    steps: self.steps,
                    reported_final: self.reported_final,
                    score_mismatch: self.score_mismatch,
                    chains: self.chains,
                    forest,
                    diagnostics: self.diagnostics,
                    binary: self.binary,
                    bypass: self.bypass,
                    transcripts: Vec::new(),
                })
            }
        };
        RecordOutcome { id, outcome }
    }
}

/// Outcome for one record: the evaluation or the recorded failure.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordOutcome {
    pub id: String,
    pub outcome: Result<EvaluationResult, String>,
}

/// Runner options. With a checkpoint path the results file is appended as
/// records complete and a rerun resumes by id.
#[derive(Debug, Clone, Default)]
pub struct BenchOptions {
    pub parallelism: usize,
    pub checkpoint: Option<PathBuf>,
    pub transcript_dir: Option<PathBuf>,
}

impl BenchOptions {
    pub fn serial() -> Self {
        BenchOptions {
            parallelism: 1,
            checkpoint: None,
            transcript_dir: None,
        }
    }
}

/// Evaluates every record with at most `parallelism` backend calls in flight.
/// Output order matches input order; per-record failures are recorded, never
/// aborting the run.
pub fn run_benchmark(
    records: &[DatasetRecord],
    config: &EvalConfig,
    backend: &dyn CompletionBackend,
    options: &BenchOptions,
) -> Result<Vec<RecordOutcome>, DatasetError> {
    if records.is_empty() {
        return Err(DatasetError::EmptyDataset);
    }
    if options.parallelism == 0 {
        return Err(DatasetError::InvalidParallelism);
    }

    let mut done: HashMap<String, ResultLine> = HashMap::new();
    if let Some(checkpoint) = &options.checkpoint {
        if checkpoint.exists() {
            for line in read_result_lines(checkpoint)? {
                done.insert(line.id.clone(), line);
            }
        }
        if let Some(parent) = checkpoint.parent() {
            std::fs::create_dir_all(parent).map_err(|e| DatasetError::Io {
                path: parent.to_path_buf(),
                message: e.to_string(),
            })?;
        }
    }
    if let Some(dir) = &options.transcript_dir {
        std::fs::create_dir_all(dir).map_err(|e| DatasetError::Io {
            path: dir.clone(),
            message: e.to_string(),
        })?;
    }

    let checkpoint_file = match &options.checkpoint {
        Some(path) => Some(Mutex::new(
            OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| DatasetError::Io {
                    path: path.clone(),
                    message: e.to_string(),
                })?,
        )),
        None => None,
    };

    let pending: Vec<usize> = records
        .iter()
        .enumerate()
        .filter(|(_, r)| !done.contains_key(&r.id))
        .map(|(i, _)| i)
        .collect();

    let slots: Vec<Mutex<Option<(ResultLine, RecordOutcome)>>> =
        records.iter().map(|_| Mutex::new(None)).collect();
    let cursor = AtomicUsize::new(0);
    let io_error: Mutex<Option<DatasetError>> = Mutex::new(None);

    let workers = options.parallelism.min(pending.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let slot = cursor.fetch_add(1, Ordering::SeqCst);
                let Some(&index) = pending.get(slot) else {
                    return;
                };
                let record = &records[index];
                let problem = record.problem();
                let outcome = run_evaluation(&problem, &record.solution_text, config, backend)
                    .map_err(|e| e.to_string());

                let transcript_path = match (&options.transcript_dir, &outcome) {
                    (Some(dir), Ok(result)) if !result.transcripts.is_empty() => {
                        let path = dir.join(format!("{}.json", sanitize_id(&record.id)));
                        match write_transcripts(&path, &result.transcripts) {
                            // Stored relative to the results file so the
                            // output directory is relocatable.
                            Ok(()) => {
                                let display = options
                                    .checkpoint
                                    .as_deref()
                                    .and_then(Path::parent)
                                    .and_then(|base| path.strip_prefix(base).ok())
                                    .unwrap_or(&path);
                                Some(display.to_string_lossy().into_owned())
                            }
                            Err(e) => {
                                io_error.lock().unwrap().get_or_insert(e);
                                None
                            }
                        }
                    }
                    _ => None,
                };

                let line =
                    ResultLine::from_outcome(&record.id, config.mode, &outcome, transcript_path);
                if let Some(file) = &checkpoint_file {
                    if let Err(e) = append_line(file, &line) {
                        io_error.lock().unwrap().get_or_insert(e);
                    }
                }
                let full = RecordOutcome {
                    id: record.id.clone(),
                    outcome,
                };
                *slots[index].lock().unwrap() = Some((line, full));
            });
        }
    });

    if let Some(e) = io_error.into_inner().unwrap() {
        return Err(e);
    }

    // Resumed records come back from the checkpoint (their transcripts live
    // on disk); fresh ones keep the full in-memory result.
    let mut final_lines: Vec<ResultLine> = Vec::with_capacity(records.len());
    let mut outcomes: Vec<RecordOutcome> = Vec::with_capacity(records.len());
    for (index, record) in records.iter().enumerate() {
        match done.remove(&record.id) {
            Some(line) => {
                final_lines.push(line.clone());
                outcomes.push(line.into_outcome());
            }
            None => {
                let (line, outcome) = slots[index]
                    .lock()
                    .unwrap()
                    .take()
                    .expect("every pending record was evaluated");
                final_lines.push(line);
                outcomes.push(outcome);
            }
        }
    }

    // Rewrite the checkpoint in input order so the finished artifact is
    // deterministic regardless of completion order.
    if let Some(path) = &options.checkpoint {
        write_result_lines(path, &final_lines)?;
    }

    Ok(outcomes)
}

fn sanitize_id(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn append_line(file: &Mutex<File>, line: &ResultLine) -> Result<(), DatasetError> {
    let serialized = serde_json::to_string(line).expect("result lines serialize");
    let mut guard = file.lock().unwrap();
    writeln!(guard, "{serialized}").map_err(|e| DatasetError::Io {
        path: PathBuf::from("checkpoint"),
        message: e.to_string(),
    })
}

fn write_transcripts(
    path: &Path,
    transcripts: &[crate::backend::Transcript],
) -> Result<(), DatasetError> {
    let body = serde_json::to_string_pretty(transcripts).expect("transcripts serialize");
    std::fs::write(path, body).map_err(|e| DatasetError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn read_result_lines(path: &Path) -> Result<Vec<ResultLine>, DatasetError> {
    let file = File::open(path).map_err(|e| DatasetError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut lines = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| DatasetError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: ResultLine =
            serde_json::from_str(&line).map_err(|e| DatasetError::MalformedLine {
                line: i + 1,
                message: e.to_string(),
            })?;
        lines.push(parsed);
    }
    Ok(lines)
}

pub fn write_result_lines(path: &Path, lines: &[ResultLine]) -> Result<(), DatasetError> {
    let mut body = String::new();
    for line in lines {
        body.push_str(&serde_json::to_string(line).expect("result lines serialize"));
        body.push('\n');
    }
    std::fs::write(path, body).map_err(|e| DatasetError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Read outcomes back from a results file, in file order.
pub fn load_outcomes(path: &Path) -> Result<Vec<RecordOutcome>, DatasetError> {
    Ok(read_result_lines(path)?
        .into_iter()
        .map(ResultLine::into_outcome)
        .collect())
}

// ---------------------------------------------------------------------------
// Metric pairing
// ---------------------------------------------------------------------------

/// Paired assigned/gold vectors with their slice keys, ready for
/// `compute_metrics`.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct MetricInputs {
    pub assigned: Vec<u8>,
    pub gold: Vec<u8>,
    pub slices: Vec<SliceKey>,
}

impl MetricInputs {
    pub fn is_empty(&self) -> bool {
        self.assigned.is_empty()
    }
}

/// Pairs successful outcomes with gold grades for `compute_metrics`.
///
/// Process-evaluation modes compare final grades against the gold score; the
/// answer-evaluation modes (V1, RuleEM) compare binaries, scaled by ten so one
/// metric path serves both blocks. Failed records and records without gold
/// are skipped.
pub fn pair_scores_for_metrics(
    records: &[DatasetRecord],
    outcomes: &[RecordOutcome],
    mode: EvalMode,
) -> Result<MetricInputs, DatasetError> {
    let by_id: HashMap<&str, &DatasetRecord> =
        records.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut inputs = MetricInputs::default();
    for outcome in outcomes {
        let Ok(result) = &outcome.outcome else {
            continue;
        };
        let Some(record) = by_id.get(outcome.id.as_str()) else {
            return Err(DatasetError::Record {
                id: outcome.id.clone(),
                message: "result id not present in dataset".to_string(),
            });
        };
        let gold_record = match record.gold {
            Some(g) => g,
            None => match record.annotation {
                Some(_) => gold_score(record)?,
                None => continue,
            },
        };
        let answer_mode = matches!(mode, EvalMode::V1 | EvalMode::RuleEm);
        let (a, g) = if answer_mode {
            let Some(binary) = result.binary else {
                continue;
            };
            (binary * 10, gold_record.binary() * 10)
        } else {
            (result.final_score, gold_record.score())
        };
        inputs.assigned.push(a);
        inputs.gold.push(g);
        inputs.slices.push(record.slice_key());
    }
    Ok(inputs)
}

// ---------------------------------------------------------------------------
// Solution generation
// ---------------------------------------------------------------------------

/// Outcome of generating one solution.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationOutcome {
    pub problem_id: String,
    pub outcome: Result<String, String>,
}

/// Generates solutions: calculation problems get the strict bracketed format
/// prompt, proof and open-ended problems the plain expert prompt.
pub fn generate_solutions(
    problems: &[Problem],
    backend: &dyn CompletionBackend,
    model_name: &str,
    language: PromptLanguage,
) -> Vec<GenerationOutcome> {
    problems
        .iter()
        .map(|problem| {
            let zh = language == PromptLanguage::Chinese;
            let instruction = match problem.problem_type {
                ProblemType::Calculation => {
                    if zh {
                        GENERATE_CALCULATION_ZH
                    } else {
                        GENERATE_CALCULATION_EN
                    }
                }
                ProblemType::Proof | ProblemType::OpenEnded => {
                    if zh {
                        GENERATE_PROOF_OPEN_ZH
                    } else {
                        GENERATE_PROOF_OPEN_EN
                    }
                }
            };
            let prompt = render_generation_input(
                instruction,
                language,
                &problem.statement,
                problem.constraint.as_deref(),
            );
            let outcome = CompletionRequest::new(prompt, model_name)
                .and_then(|request| backend.complete(&request))
                .map(|transcript| transcript.raw_response)
                .map_err(|e| e.to_string());
            GenerationOutcome {
                problem_id: problem.id.clone(),
                outcome,
            }
        })
        .collect()
}
