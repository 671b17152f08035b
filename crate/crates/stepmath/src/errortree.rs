//! Error chains and the merged error forest: parsing the "(3)-(4)-(6), (5)-(6)"
//! notation, suffix-merging chains into trees rooted at terminal errors, label
//! cross-checks, and DOT/JSON export.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::core::{ScoredSolution, StepLabel};

#[derive(Debug, Error, PartialEq)]
pub enum ChainError {
    #[error("malformed chain '{chain}': token '{token}' is not a parenthesized integer")]
    MalformedToken { chain: String, token: String },
    #[error("malformed chain '{chain}': indices must be strictly increasing")]
    NonIncreasing { chain: String },
    #[error("malformed chain '{chain}': chain is empty")]
    Empty { chain: String },
    #[error("step index 0 in chain '{chain}': indices are 1-based")]
    ZeroIndex { chain: String },
    #[error("invalid forest JSON: {0}")]
    Json(String),
}

/// A strictly increasing sequence of 1-based erroneous step indices, ending at
/// the terminal error.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ErrorChain(Vec<usize>);

impl ErrorChain {
    pub fn new(indices: Vec<usize>) -> Result<Self, ChainError> {
        let rendered = || {
            indices
                .iter()
                .map(|i| format!("({i})"))
                .collect::<Vec<_>>()
                .join("-")
        };
        if indices.is_empty() {
            return Err(ChainError::Empty {
                chain: String::new(),
            });
        }
        if indices.contains(&0) {
            return Err(ChainError::ZeroIndex { chain: rendered() });
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ChainError::NonIncreasing { chain: rendered() });
        }
        Ok(ErrorChain(indices))
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    /// The terminal (largest) index; the root of its branch in the forest.
    pub fn terminal(&self) -> usize {
        *self.0.last().expect("chains are non-empty")
    }
}

impl fmt::Display for ErrorChain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|i| format!("({i})")).collect();
        f.write_str(&parts.join("-"))
    }
}

/// Parses a chain listing such as `"(3)-(4)-(6), (5)-(6)"`.
///
/// Accepts full-width parentheses and commas and arbitrary surrounding
/// whitespace; empty input yields no chains.
pub fn parse_chains(text: &str) -> Result<Vec<ErrorChain>, ChainError> {
    let normalized = text
        .replace('（', "(")
        .replace('）', ")")
        .replace('，', ",");
    let mut chains = Vec::new();
    for segment in normalized.split(',') {
        let segment = segment.trim();
        if segment.is_empty() {
            continue;
        }
        let mut indices = Vec::new();
        for token in segment.split('-') {
            let token = token.trim();
            let inner = token
                .strip_prefix('(')
                .and_then(|t| t.strip_suffix(')'))
                .map(str::trim)
                .ok_or_else(|| ChainError::MalformedToken {
                    chain: segment.to_string(),
                    token: token.to_string(),
                })?;
            let index: usize = inner.parse().map_err(|_| ChainError::MalformedToken {
                chain: segment.to_string(),
                token: token.to_string(),
            })?;
            indices.push(index);
        }
        match ErrorChain::new(indices) {
            Ok(chain) => chains.push(chain),
            Err(ChainError::NonIncreasing { .. }) => {
                return Err(ChainError::NonIncreasing {
                    chain: segment.to_string(),
                })
            }
            Err(ChainError::ZeroIndex { .. }) => {
                return Err(ChainError::ZeroIndex {
                    chain: segment.to_string(),
                })
            }
            Err(e) => return Err(e),
        }
    }
    Ok(chains)
}

/// Canonical rendering; `parse_chains(render_chains(c)) == c`.
pub fn render_chains(chains: &[ErrorChain]) -> String {
    chains
        .iter()
        .map(|c| c.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

/// One node of the error forest. Children carry strictly smaller indices:
/// edges point backward from a terminal error toward its origins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestNode {
    pub step: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<ForestNode>,
}

/// Error chains merged by shared suffix into trees rooted at terminal errors.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorForest {
    pub roots: Vec<ForestNode>,
}

/// Non-fatal findings produced while merging chains into a forest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeDiagnostic {
    /// A step index landed in more than one branch because chains disagree on
    /// its continuation.
    DuplicateStep { step: usize, occurrences: usize },
}

impl fmt::Display for TreeDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TreeDiagnostic::DuplicateStep { step, occurrences } => write!(
                f,
                "step {step} appears in {occurrences} branches; chains disagree on its continuation"
            ),
        }
    }
}

/// Merges chains into a forest. Each chain is walked from its terminal error
/// backward; chains sharing a terminal segment share those nodes. Chain sets
/// that place one step in several branches still build, with a diagnostic.
pub fn build_forest(chains: &[ErrorChain]) -> (ErrorForest, Vec<TreeDiagnostic>) {
    let mut forest = ErrorForest::default();
    for chain in chains {
        let reversed: Vec<usize> = chain.indices().iter().rev().copied().collect();
        insert_path(&mut forest.roots, &reversed);
    }

    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for step in forest.step_indices() {
        *counts.entry(step).or_default() += 1;
    }
    let diagnostics = counts
        .into_iter()
        .filter(|(_, n)| *n > 1)
        .map(|(step, occurrences)| TreeDiagnostic::DuplicateStep { step, occurrences })
        .collect();

    (forest, diagnostics)
}

fn insert_path(nodes: &mut Vec<ForestNode>, path: &[usize]) {
    let Some((&head, rest)) = path.split_first() else {
        return;
    };
    let pos = match nodes.binary_search_by_key(&head, |n| n.step) {
        Ok(pos) => pos,
        Err(pos) => {
            nodes.insert(
                pos,
                ForestNode {
                    step: head,
                    children: Vec::new(),
                },
            );
            pos
        }
    };
    insert_path(&mut nodes[pos].children, rest);
}

impl ErrorForest {
    pub fn is_empty(&self) -> bool {
        self.roots.is_empty()
    }

    pub fn root_count(&self) -> usize {
        self.roots.len()
    }

    pub fn node_count(&self) -> usize {
        fn count(node: &ForestNode) -> usize {
            1 + node.children.iter().map(count).sum::<usize>()
        }
        self.roots.iter().map(count).sum()
    }

    pub fn edge_count(&self) -> usize {
        self.node_count() - self.root_count()
    }

    /// All step indices in depth-first order, duplicates included.
    pub fn step_indices(&self) -> Vec<usize> {
        fn walk(node: &ForestNode, out: &mut Vec<usize>) {
            out.push(node.step);
            for child in &node.children {
                walk(child, out);
            }
        }
        let mut out = Vec::new();
        for root in &self.roots {
            walk(root, &mut out);
        }
        out
    }

    /// Every path from a leaf up to its root, each in chain order (ascending
    /// toward the terminal error).
    pub fn leaf_to_root_paths(&self) -> Vec<Vec<usize>> {
        fn walk(node: &ForestNode, above: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            above.push(node.step);
            if node.children.is_empty() {
                out.push(above.iter().rev().copied().collect());
            } else {
                for child in &node.children {
                    walk(child, above, out);
                }
            }
            above.pop();
        }
        let mut out = Vec::new();
        let mut stack = Vec::new();
        for root in &self.roots {
            walk(root, &mut stack, &mut out);
        }
        out
    }

    /// True when the chain's reversal is a root-anchored descending path,
    /// i.e. the chain survived the merge intact.
    pub fn contains_chain(&self, chain: &ErrorChain) -> bool {
        let mut nodes = &self.roots;
        for &step in chain.indices().iter().rev() {
            match nodes.iter().find(|n| n.step == step) {
                Some(node) => nodes = &node.children,
                None => return false,
            }
        }
        true
    }
}

/// Advisory findings from cross-checking chains against step labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LabelDiagnostic {
    /// A chain references a step the labels say is correct.
    CorrectStepInChain { step: usize },
    /// A step scored 0 appears in no chain.
    UncoveredErrorStep { step: usize },
    /// A chain references an index beyond the solution's step count.
    IndexOutOfRange { step: usize, step_count: usize },
}

impl fmt::Display for LabelDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelDiagnostic::CorrectStepInChain { step } => {
                write!(f, "chain references step {step}, which is labeled correct")
            }
            LabelDiagnostic::UncoveredErrorStep { step } => {
                write!(f, "step {step} scored 0 but appears in no error chain")
            }
            LabelDiagnostic::IndexOutOfRange { step, step_count } => {
                write!(f, "chain index {step} exceeds the {step_count} segmented steps")
            }
        }
    }
}

/// Cross-checks chains against step labels. Purely advisory: the recomputed
/// score stays authoritative and the forest is still built.
pub fn validate_against_labels(
    chains: &[ErrorChain],
    scored: &ScoredSolution,
) -> Vec<LabelDiagnostic> {
    let steps = scored.steps();
    let step_count = steps.len();
    let mut covered = vec![false; step_count + 1];
    let mut diagnostics = Vec::new();

    for chain in chains {
        for &index in chain.indices() {
            if index > step_count {
                diagnostics.push(LabelDiagnostic::IndexOutOfRange {
                    step: index,
                    step_count,
                });
                continue;
            }
            covered[index] = true;
            if steps[index - 1].label == StepLabel::Correct {
                diagnostics.push(LabelDiagnostic::CorrectStepInChain { step: index });
            }
        }
    }

    for step in steps {
        if step.label != StepLabel::Correct && !covered[step.index] {
            diagnostics.push(LabelDiagnostic::UncoveredErrorStep { step: step.index });
        }
    }

    diagnostics
}

/// Renders the forest as Graphviz DOT. Output is deterministic: nodes appear
/// in depth-first order with children sorted by step index. `step_texts` maps
/// step indices to display text, truncated for labels.
pub fn export_dot(forest: &ErrorForest, step_texts: &BTreeMap<usize, String>) -> String {
    const MAX_LABEL_CHARS: usize = 40;

    fn escape(s: &str) -> String {
        s.replace('\\', "\\\\").replace('"', "\\\"")
    }

    fn truncate(s: &str) -> String {
        let mut chars = s.chars();
        let head: String = chars.by_ref().take(MAX_LABEL_CHARS).collect();
        if chars.next().is_some() {
            format!("{head}…")
        } else {
            head
        }
    }

    let mut out = String::from("digraph error_tree {\n");
    out.push_str("  node [shape=box];\n");

    let mut ids = Vec::new();
    let mut edges = Vec::new();
    fn walk(
        node: &ForestNode,
        parent: Option<usize>,
        ids: &mut Vec<(usize, usize)>,
        edges: &mut Vec<(usize, usize)>,
    ) {
        let id = ids.len();
        ids.push((id, node.step));
        if let Some(parent) = parent {
            edges.push((parent, id));
        }
        for child in &node.children {
            walk(child, Some(id), ids, edges);
        }
    }
    for root in &forest.roots {
        walk(root, None, &mut ids, &mut edges);
    }

    for (id, step) in &ids {
        let label = match step_texts.get(step) {
            Some(text) => format!("({step}) {}", truncate(text)),
            None => format!("({step})"),
        };
        out.push_str(&format!("  n{id} [label=\"{}\"];\n", escape(&label)));
    }
    for (from, to) in &edges {
        out.push_str(&format!("  n{from} -> n{to};\n"));
    }
    out.push_str("}\n");
    out
}

/// Serializes the forest as the `{"roots": [...]}` JSON document.
pub fn export_json(forest: &ErrorForest) -> String {
    serde_json::to_string_pretty(forest).expect("forest serialization cannot fail")
}

pub fn parse_forest_json(text: &str) -> Result<ErrorForest, ChainError> {
    serde_json::from_str(text).map_err(|e| ChainError::Json(e.to_string()))
}
