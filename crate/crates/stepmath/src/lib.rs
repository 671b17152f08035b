//! Step-wise mathematical process evaluation.
//!
//! The pipeline segments a model's solution into reasoning steps through a
//! completion backend, scores each step 0/1, aggregates a 0-10 grade with a
//! 6:4 process/answer weighting for calculation problems (uniform weighting
//! for proof and open-ended), and merges the reported error chains into an
//! error forest rooted at terminal errors. A benchmark harness runs datasets
//! against the agent or the V1/V2/V3/RuleEM baselines and reports
//! AvgS/Corr/MSE/OR against gold annotations.

pub mod agent;
pub mod aggregate;
pub mod backend;
pub mod bench;
pub mod core;
pub mod errortree;
pub mod prompts;

pub use agent::{
    build_prompt, evaluate, evaluate_rule_em, evaluate_v1, evaluate_v2, evaluate_v3,
    run_evaluation, AgentError, EvalConfig, EvalMode, EvaluationResult,
};
pub use aggregate::{
    aggregate_score, binary_score, degenerate_calculation, round_half_away, AggregationPolicy,
};
pub use backend::{
    extract_json, parse_agent_verdict, parse_score_verdict, AgentVerdict, BackendError,
    CompletionBackend, CompletionRequest, HttpBackend, HttpConfig, MockBackend, Transcript,
};
pub use bench::{
    compute_metrics, gold_score, load_dataset, pair_scores_for_metrics, render_markdown,
    run_benchmark, synth_fixtures, BenchOptions, DatasetRecord, LoadMode, MetricInputs,
    MetricsReport, RecordOutcome, ResultLine,
};
pub use core::{
    classify_difficulty, step_score, CategoryCatalog, Difficulty, DifficultyInput, GoldRecord,
    KnowledgeScope, PrimaryCategory, Problem, ProblemType, ScoredSolution, StepLabel,
};
pub use errortree::{
    build_forest, export_dot, export_json, parse_chains, parse_forest_json, render_chains,
    validate_against_labels, ErrorChain, ErrorForest,
};
pub use prompts::{ExternalModule, ModuleSet, PromptLanguage, PromptVariant};
