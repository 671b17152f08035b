//! Domain types shared across the crate, plus the knowledge/steps difficulty classifier.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("knowledge_points must be 1, 2 or 3 (got {0})")]
    KnowledgePointsOutOfRange(u8),
    #[error("solution_steps must be >= 1")]
    ZeroSolutionSteps,
    #[error("unknown secondary category '{secondary}' for {primary:?}")]
    UnknownSecondaryCategory {
        primary: PrimaryCategory,
        secondary: String,
    },
    #[error("step indices must be contiguous starting at 1 (step {position} has index {index})")]
    NonContiguousSteps { position: usize, index: usize },
    #[error("solution must contain at least one step")]
    EmptySolution,
    #[error("step {index} text is empty after trimming")]
    EmptyStepText { index: usize },
    #[error("gold score {0} outside 0..=10")]
    GoldScoreOutOfRange(u8),
    #[error("binary score {0} outside {{0,1}}")]
    BinaryScoreOutOfRange(u8),
}

/// The three problem types distinguished by the scoring rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemType {
    Calculation,
    Proof,
    OpenEnded,
}

impl ProblemType {
    pub const ALL: [ProblemType; 3] = [
        ProblemType::Calculation,
        ProblemType::Proof,
        ProblemType::OpenEnded,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ProblemType::Calculation => "calculation",
            ProblemType::Proof => "proof",
            ProblemType::OpenEnded => "open_ended",
        }
    }
}

/// Primary subject categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimaryCategory {
    ElementaryMathematics,
    ModernMathematics,
    ContemporaryMathematics,
    AppliedMathematics,
}

impl PrimaryCategory {
    pub const ALL: [PrimaryCategory; 4] = [
        PrimaryCategory::ElementaryMathematics,
        PrimaryCategory::ModernMathematics,
        PrimaryCategory::ContemporaryMathematics,
        PrimaryCategory::AppliedMathematics,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PrimaryCategory::ElementaryMathematics => "elementary_mathematics",
            PrimaryCategory::ModernMathematics => "modern_mathematics",
            PrimaryCategory::ContemporaryMathematics => "contemporary_mathematics",
            PrimaryCategory::AppliedMathematics => "applied_mathematics",
        }
    }
}

/// Built-in secondary categories per primary category. Secondary categories are
/// validated strings rather than an enum so deployments can register new ones
/// through configuration without code changes.
const DEFAULT_SECONDARY: [(PrimaryCategory, &[&str]); 4] = [
    (
        PrimaryCategory::ElementaryMathematics,
        &["Arithmetic", "Algebra", "Geometry"],
    ),
    (
        PrimaryCategory::ModernMathematics,
        &["Advanced Mathematics", "Linear Algebra", "Analytic Geometry"],
    ),
    (
        PrimaryCategory::ContemporaryMathematics,
        &[
            "Discrete Mathematics",
            "Probability and Statistics",
            "Number Theory",
            "Functional Analysis",
        ],
    ),
    (
        PrimaryCategory::AppliedMathematics,
        &[
            "Financial and Economic",
            "Real-World Applications",
            "Optimization and Planning",
            "Misguidance",
            "Other Applications",
        ],
    ),
];

/// Registry of accepted secondary categories, keyed by primary category.
#[derive(Debug, Clone)]
pub struct CategoryCatalog {
    entries: BTreeMap<PrimaryCategory, BTreeSet<String>>,
}

impl Default for CategoryCatalog {
    fn default() -> Self {
        let mut entries = BTreeMap::new();
        for (primary, names) in DEFAULT_SECONDARY {
            entries.insert(
                primary,
                names.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>(),
            );
        }
        CategoryCatalog { entries }
    }
}

impl CategoryCatalog {
    pub fn register(&mut self, primary: PrimaryCategory, secondary: impl Into<String>) {
        self.entries.entry(primary).or_default().insert(secondary.into());
    }

    pub fn is_known(&self, primary: PrimaryCategory, secondary: &str) -> bool {
        self.entries
            .get(&primary)
            .map(|set| set.contains(secondary))
            .unwrap_or(false)
    }

    pub fn secondaries(&self, primary: PrimaryCategory) -> impl Iterator<Item = &str> {
        self.entries
            .get(&primary)
            .into_iter()
            .flat_map(|set| set.iter().map(|s| s.as_str()))
    }
}

/// Difficulty level; serialized as the integer 1, 2 or 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Difficulty {
    Easy = 1,
    Medium = 2,
    Hard = 3,
}

impl From<Difficulty> for u8 {
    fn from(d: Difficulty) -> u8 {
        d as u8
    }
}

impl TryFrom<u8> for Difficulty {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            1 => Ok(Difficulty::Easy),
            2 => Ok(Difficulty::Medium),
            3 => Ok(Difficulty::Hard),
            other => Err(format!("difficulty must be 1, 2 or 3 (got {other})")),
        }
    }
}

/// A mathematical problem with its classification metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub id: String,
    pub statement: String,
    pub problem_type: ProblemType,
    pub category_primary: PrimaryCategory,
    pub category_secondary: String,
    pub difficulty: Difficulty,
    /// Answer-format restriction enabling rule-based exact matching.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_answer: Option<String>,
}

impl Problem {
    /// Checks the secondary category against the catalog.
    pub fn validate(&self, catalog: &CategoryCatalog) -> Result<(), CoreError> {
        if !catalog.is_known(self.category_primary, &self.category_secondary) {
            return Err(CoreError::UnknownSecondaryCategory {
                primary: self.category_primary,
                secondary: self.category_secondary.clone(),
            });
        }
        Ok(())
    }
}

/// Knowledge scope bands used by the difficulty classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnowledgeScope {
    AtMostMiddleSchool,
    HighSchool,
    AtLeastUndergraduate,
}

/// Inputs for `classify_difficulty`. Construct via `new` so the invariants
/// (points in 1..=3, steps >= 1) always hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawDifficultyInput", into = "RawDifficultyInput")]
pub struct DifficultyInput {
    knowledge_scope: KnowledgeScope,
    knowledge_points: u8,
    solution_steps: u32,
}

#[derive(Serialize, Deserialize)]
struct RawDifficultyInput {
    knowledge_scope: KnowledgeScope,
    knowledge_points: u8,
    solution_steps: u32,
}

impl From<DifficultyInput> for RawDifficultyInput {
    fn from(d: DifficultyInput) -> Self {
        RawDifficultyInput {
            knowledge_scope: d.knowledge_scope,
            knowledge_points: d.knowledge_points,
            solution_steps: d.solution_steps,
        }
    }
}

impl TryFrom<RawDifficultyInput> for DifficultyInput {
    type Error = String;

    fn try_from(raw: RawDifficultyInput) -> Result<Self, Self::Error> {
        DifficultyInput::new(raw.knowledge_scope, raw.knowledge_points, raw.solution_steps)
            .map_err(|e| e.to_string())
    }
}

impl DifficultyInput {
    pub fn new(
        knowledge_scope: KnowledgeScope,
        knowledge_points: u8,
        solution_steps: u32,
    ) -> Result<Self, CoreError> {
        if !(1..=3).contains(&knowledge_points) {
            return Err(CoreError::KnowledgePointsOutOfRange(knowledge_points));
        }
        if solution_steps == 0 {
            return Err(CoreError::ZeroSolutionSteps);
        }
        Ok(DifficultyInput {
            knowledge_scope,
            knowledge_points,
            solution_steps,
        })
    }

    pub fn knowledge_scope(&self) -> KnowledgeScope {
        self.knowledge_scope
    }

    pub fn knowledge_points(&self) -> u8 {
        self.knowledge_points
    }

    pub fn solution_steps(&self) -> u32 {
        self.solution_steps
    }
}

/// Classifies a problem's difficulty from its knowledge metadata and the
/// number of coarse-grained standardized solution steps.
///
/// The classifier is a two-stage lookup: (scope, points) determine a knowledge
/// level, and the (level, step bucket) pair selects the difficulty. Step
/// buckets are 1-2, 3-5 and >5.
pub fn classify_difficulty(input: &DifficultyInput) -> Difficulty {
    let level = knowledge_level(input.knowledge_scope, input.knowledge_points);
    let bucket = step_bucket(input.solution_steps);
    match (level, bucket) {
        (1, 0) | (1, 1) => Difficulty::Easy,
        (1, 2) => Difficulty::Medium,
        (2, 0) => Difficulty::Easy,
        (2, 1) => Difficulty::Medium,
        (2, 2) => Difficulty::Hard,
        (3, 0) => Difficulty::Medium,
        _ => Difficulty::Hard,
    }
}

fn knowledge_level(scope: KnowledgeScope, points: u8) -> u8 {
    match (scope, points) {
        (KnowledgeScope::AtMostMiddleSchool, 1 | 2) => 1,
        (KnowledgeScope::AtMostMiddleSchool, _) => 2,
        (KnowledgeScope::HighSchool, 1 | 2) => 2,
        (KnowledgeScope::HighSchool, _) => 3,
        (KnowledgeScope::AtLeastUndergraduate, 1) => 2,
        (KnowledgeScope::AtLeastUndergraduate, _) => 3,
    }
}

fn step_bucket(steps: u32) -> u8 {
    match steps {
        1..=2 => 0,
        3..=5 => 1,
        _ => 2,
    }
}

/// Three-way step label assigned by annotators or the evaluation agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepLabel {
    Correct,
    Incorrect,
    /// Correct in isolation but descending from an earlier error; scored 0.
    CorrectButMeaningless,
}

/// Maps a step label to its 0/1 score.
pub fn step_score(label: StepLabel) -> u8 {
    match label {
        StepLabel::Correct => 1,
        StepLabel::Incorrect | StepLabel::CorrectButMeaningless => 0,
    }
}

/// Where a set of step labels came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolutionOrigin {
    HumanAnnotation,
    AgentVerdict,
}

/// One segmented reasoning step with its 1-based index and label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledStep {
    pub index: usize,
    pub text: String,
    pub label: StepLabel,
}

/// A solution segmented into labeled steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawScoredSolution", into = "RawScoredSolution")]
pub struct ScoredSolution {
    problem_id: String,
    generator: String,
    steps: Vec<LabeledStep>,
    origin: SolutionOrigin,
}

#[derive(Serialize, Deserialize)]
struct RawScoredSolution {
    problem_id: String,
    generator: String,
    steps: Vec<LabeledStep>,
    origin: SolutionOrigin,
}

impl From<ScoredSolution> for RawScoredSolution {
    fn from(s: ScoredSolution) -> Self {
        RawScoredSolution {
            problem_id: s.problem_id,
            generator: s.generator,
            steps: s.steps,
            origin: s.origin,
        }
    }
}

impl TryFrom<RawScoredSolution> for ScoredSolution {
    type Error = String;

    fn try_from(raw: RawScoredSolution) -> Result<Self, Self::Error> {
        ScoredSolution::new(raw.problem_id, raw.generator, raw.steps, raw.origin)
            .map_err(|e| e.to_string())
    }
}

impl ScoredSolution {
    pub fn new(
        problem_id: impl Into<String>,
        generator: impl Into<String>,
        steps: Vec<LabeledStep>,
        origin: SolutionOrigin,
    ) -> Result<Self, CoreError> {
        if steps.is_empty() {
            return Err(CoreError::EmptySolution);
        }
        for (position, step) in steps.iter().enumerate() {
            if step.index != position + 1 {
                return Err(CoreError::NonContiguousSteps {
                    position: position + 1,
                    index: step.index,
                });
            }
            if step.text.trim().is_empty() {
                return Err(CoreError::EmptyStepText { index: step.index });
            }
        }
        Ok(ScoredSolution {
            problem_id: problem_id.into(),
            generator: generator.into(),
            steps,
            origin,
        })
    }

    pub fn problem_id(&self) -> &str {
        &self.problem_id
    }

    pub fn generator(&self) -> &str {
        &self.generator
    }

    pub fn steps(&self) -> &[LabeledStep] {
        &self.steps
    }

    pub fn origin(&self) -> SolutionOrigin {
        self.origin
    }

    /// Per-step 0/1 scores in index order.
    pub fn scores(&self) -> Vec<u8> {
        self.steps.iter().map(|s| step_score(s.label)).collect()
    }
}

/// Human-derived reference grades for one solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawGoldRecord", into = "RawGoldRecord")]
pub struct GoldRecord {
    score: u8,
    binary: u8,
}

#[derive(Serialize, Deserialize)]
struct RawGoldRecord {
    score: u8,
    binary: u8,
}

impl From<GoldRecord> for RawGoldRecord {
    fn from(g: GoldRecord) -> Self {
        RawGoldRecord {
            score: g.score,
            binary: g.binary,
        }
    }
}

impl TryFrom<RawGoldRecord> for GoldRecord {
    type Error = String;

    fn try_from(raw: RawGoldRecord) -> Result<Self, Self::Error> {
        GoldRecord::new(raw.score, raw.binary).map_err(|e| e.to_string())
    }
}

impl GoldRecord {
    pub fn new(score: u8, binary: u8) -> Result<Self, CoreError> {
        if score > 10 {
            return Err(CoreError::GoldScoreOutOfRange(score));
        }
        if binary > 1 {
            return Err(CoreError::BinaryScoreOutOfRange(binary));
        }
        Ok(GoldRecord { score, binary })
    }

    pub fn score(&self) -> u8 {
        self.score
    }

    pub fn binary(&self) -> u8 {
        self.binary
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn input(scope: KnowledgeScope, points: u8, steps: u32) -> DifficultyInput {
        DifficultyInput::new(scope, points, steps).unwrap()
    }

    #[test]
    fn difficulty_examples() {
        use KnowledgeScope::*;
        assert_eq!(
            classify_difficulty(&input(AtMostMiddleSchool, 1, 2)),
            Difficulty::Easy
        );
        assert_eq!(
            classify_difficulty(&input(AtMostMiddleSchool, 3, 7)),
            Difficulty::Hard
        );
        assert_eq!(
            classify_difficulty(&input(HighSchool, 3, 1)),
            Difficulty::Medium
        );
    }

    /// Full 9x3 matrix: rows in (scope, points) order, columns are the
    /// step buckets 1-2 / 3-5 / >5.
    #[test]
    fn difficulty_matrix_is_exact() {
        use KnowledgeScope::*;
        let rows: [(KnowledgeScope, u8, [u8; 3]); 9] = [
            (AtMostMiddleSchool, 1, [1, 1, 2]),
            (AtMostMiddleSchool, 2, [1, 1, 2]),
            (AtMostMiddleSchool, 3, [1, 2, 3]),
            (HighSchool, 1, [1, 2, 3]),
            (HighSchool, 2, [1, 2, 3]),
            (HighSchool, 3, [2, 3, 3]),
            (AtLeastUndergraduate, 1, [1, 2, 3]),
            (AtLeastUndergraduate, 2, [2, 3, 3]),
            (AtLeastUndergraduate, 3, [2, 3, 3]),
        ];
        let bucket_reps = [2u32, 4, 6];
        for (scope, points, expected) in rows {
            for (b, steps) in bucket_reps.iter().enumerate() {
                let got = classify_difficulty(&input(scope, points, *steps));
                assert_eq!(u8::from(got), expected[b], "{scope:?} points={points} steps={steps}");
            }
        }
    }

    #[test]
    fn difficulty_monotone_in_step_bucket() {
        use KnowledgeScope::*;
        for scope in [AtMostMiddleSchool, HighSchool, AtLeastUndergraduate] {
            for points in 1..=3u8 {
                let levels: Vec<u8> = [1u32, 3, 6]
                    .iter()
                    .map(|s| u8::from(classify_difficulty(&input(scope, points, *s))))
                    .collect();
                assert!(levels[0] <= levels[1] && levels[1] <= levels[2]);
            }
        }
    }

    #[test]
    fn bucket_boundaries_are_closed() {
        use KnowledgeScope::*;
        // 2 vs 3 and 5 vs 6 are the bucket edges for a row where they differ.
        assert_eq!(
            classify_difficulty(&input(HighSchool, 1, 2)),
            Difficulty::Easy
        );
        assert_eq!(
            classify_difficulty(&input(HighSchool, 1, 3)),
            Difficulty::Medium
        );
        assert_eq!(
            classify_difficulty(&input(HighSchool, 1, 5)),
            Difficulty::Medium
        );
        assert_eq!(
            classify_difficulty(&input(HighSchool, 1, 6)),
            Difficulty::Hard
        );
    }

    #[test]
    fn step_score_mapping_is_total() {
        assert_eq!(step_score(StepLabel::Correct), 1);
        assert_eq!(step_score(StepLabel::Incorrect), 0);
        assert_eq!(step_score(StepLabel::CorrectButMeaningless), 0);
    }

    #[test]
    fn difficulty_input_rejects_bad_values() {
        assert!(DifficultyInput::new(KnowledgeScope::HighSchool, 0, 1).is_err());
        assert!(DifficultyInput::new(KnowledgeScope::HighSchool, 4, 1).is_err());
        assert!(DifficultyInput::new(KnowledgeScope::HighSchool, 2, 0).is_err());
    }

    #[test]
    fn scored_solution_validates_indices_and_texts() {
        let step = |index, text: &str, label| LabeledStep {
            index,
            text: text.to_string(),
            label,
        };
        let ok = ScoredSolution::new(
            "p1",
            "human",
            vec![
                step(1, "a", StepLabel::Correct),
                step(2, "b", StepLabel::Incorrect),
            ],
            SolutionOrigin::HumanAnnotation,
        );
        assert!(ok.is_ok());
        assert_eq!(ok.unwrap().scores(), vec![1, 0]);

        let gap = ScoredSolution::new(
            "p1",
            "human",
            vec![
                step(1, "a", StepLabel::Correct),
                step(3, "b", StepLabel::Correct),
            ],
            SolutionOrigin::HumanAnnotation,
        );
        assert!(matches!(gap, Err(CoreError::NonContiguousSteps { .. })));

        let blank = ScoredSolution::new(
            "p1",
            "human",
            vec![step(1, "   ", StepLabel::Correct)],
            SolutionOrigin::HumanAnnotation,
        );
        assert!(matches!(blank, Err(CoreError::EmptyStepText { index: 1 })));

        let empty = ScoredSolution::new("p1", "human", vec![], SolutionOrigin::HumanAnnotation);
        assert!(matches!(empty, Err(CoreError::EmptySolution)));
    }

    #[test]
    fn category_catalog_accepts_registered_extras() {
        let mut catalog = CategoryCatalog::default();
        assert!(catalog.is_known(PrimaryCategory::ElementaryMathematics, "Algebra"));
        assert!(!catalog.is_known(PrimaryCategory::ElementaryMathematics, "Topology"));
        catalog.register(PrimaryCategory::ElementaryMathematics, "Topology");
        assert!(catalog.is_known(PrimaryCategory::ElementaryMathematics, "Topology"));
    }

    #[test]
    fn difficulty_serializes_as_integer() {
        let json = serde_json::to_string(&Difficulty::Medium).unwrap();
        assert_eq!(json, "2");
        let back: Difficulty = serde_json::from_str("3").unwrap();
        assert_eq!(back, Difficulty::Hard);
        assert!(serde_json::from_str::<Difficulty>("4").is_err());
    }

    #[test]
    fn gold_record_bounds() {
        assert!(GoldRecord::new(10, 1).is_ok());
        assert!(GoldRecord::new(11, 0).is_err());
        assert!(GoldRecord::new(5, 2).is_err());
    }
}
