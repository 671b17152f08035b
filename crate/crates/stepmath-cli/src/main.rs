//! Command-line surface for the stepmath evaluation engine.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use stepmath::agent::{AgentError, EvalConfig, EvalMode, EvaluationResult};
use stepmath::backend::{CompletionBackend, HttpBackend, HttpConfig, MockBackend};
use stepmath::bench::{
    compute_metrics, gold_score, load_dataset_with, load_outcomes, pair_scores_for_metrics,
    render_markdown, run_benchmark, synth_fixtures, BenchOptions, DatasetError, GenerationOutcome,
    LoadMode,
};
use stepmath::core::{CategoryCatalog, PrimaryCategory, Problem};
use stepmath::errortree::{export_dot, export_json};
use stepmath::prompts::{ExternalModule, ModuleSet, PromptLanguage};

/// Flag > environment > config file > built-in default.
const DEFAULT_MODEL: &str = "gpt-4o";

#[derive(Parser)]
#[command(
    name = "stepmath",
    about = "Step-wise math process evaluation: grade solutions, run benchmarks, export error trees",
    version
)]
struct Cli {
    /// TOML config file (keys: model, base_url, api_key, language, parallelism,
    /// extra_categories)
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate one solution against one problem
    Evaluate(EvaluateArgs),
    /// Run a dataset through an evaluator and report metrics
    Bench(BenchArgs),
    /// Fill gold grades from human step annotations
    Gold(GoldArgs),
    /// Compute metrics from an existing results file
    Metrics(MetricsArgs),
    /// Export the error forest of a stored evaluation result
    Tree(TreeArgs),
    /// Generate solutions for problems with a completion backend
    Gen(GenArgs),
    /// Synthesize a deterministic annotated fixture dataset
    Fixtures(FixturesArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Agent,
    V1,
    V2,
    V3,
    RuleEm,
}

impl From<ModeArg> for EvalMode {
    fn from(m: ModeArg) -> EvalMode {
        match m {
            ModeArg::Agent => EvalMode::Agent,
            ModeArg::V1 => EvalMode::V1,
            ModeArg::V2 => EvalMode::V2,
            ModeArg::V3 => EvalMode::V3,
            ModeArg::RuleEm => EvalMode::RuleEm,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LanguageArg {
    Chinese,
    English,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TreeFormat {
    Dot,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendArg {
    Mock,
    Http,
}

#[derive(Args, Clone)]
struct BackendOpts {
    /// Completion backend
    #[arg(long, value_enum, default_value = "http")]
    backend: BackendArg,
    /// Scripted responses for the mock backend (JSON: {"script": [...],
    /// "routes": [{"contains": "...", "responses": [...]}]})
    #[arg(long)]
    mock_script: Option<PathBuf>,
    /// Chat-completions base URL (overrides STEPMATH_BASE_URL and config)
    #[arg(long)]
    base_url: Option<String>,
    /// Model name sent with each request (overrides config)
    #[arg(long)]
    model: Option<String>,
}

#[derive(Args, Clone)]
struct EvalOpts {
    /// Evaluator to run
    #[arg(long, value_enum, default_value = "agent")]
    mode: ModeArg,
    /// External modules (agent mode): comma-separated difficulty, simplicity,
    /// completeness, format
    #[arg(long, value_delimiter = ',')]
    modules: Vec<String>,
    /// Target step count hint for segmentation
    #[arg(long)]
    step_hint: Option<u32>,
    /// Prompt language (overrides config)
    #[arg(long, value_enum)]
    language: Option<LanguageArg>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Problem JSON file
    #[arg(long)]
    problem_file: PathBuf,
    /// Solution text file
    #[arg(long, conflicts_with = "solution_text")]
    solution_file: Option<PathBuf>,
    /// Solution text inline
    #[arg(long)]
    solution_text: Option<String>,
    #[command(flatten)]
    eval: EvalOpts,
    #[command(flatten)]
    backend: BackendOpts,
    /// Write the evaluation result JSON here (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also export the error forest in this format
    #[arg(long, value_enum)]
    tree: Option<TreeFormat>,
    /// Where the forest goes (defaults next to --out)
    #[arg(long)]
    tree_out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Dataset JSONL file
    dataset: PathBuf,
    #[command(flatten)]
    eval: EvalOpts,
    #[command(flatten)]
    backend: BackendOpts,
    /// Concurrent backend calls (default 4, configurable)
    #[arg(long)]
    parallelism: Option<usize>,
    /// Continue an interrupted run from its results file
    #[arg(long)]
    resume: bool,
    /// Output directory (results.jsonl, metrics.json, metrics.md, transcripts/)
    #[arg(long, default_value = "bench-out")]
    out_dir: PathBuf,
    /// Abort on dataset violations and exit nonzero on any record failure
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct GoldArgs {
    /// Dataset JSONL file with annotations
    dataset: PathBuf,
    /// Output JSONL with gold fields filled (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MetricsArgs {
    /// Results JSONL produced by `bench`
    results: PathBuf,
    /// The dataset the results were computed over
    dataset: PathBuf,
    /// Write the JSON report here (stdout when omitted)
    #[arg(long)]
    out_json: Option<PathBuf>,
    /// Write the Markdown report here
    #[arg(long)]
    out_md: Option<PathBuf>,
}

#[derive(Args)]
struct TreeArgs {
    /// Evaluation result JSON from `evaluate`
    result: PathBuf,
    #[arg(long, value_enum, default_value = "dot")]
    format: TreeFormat,
    /// Output file (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    /// Problems JSONL file
    problems: PathBuf,
    #[command(flatten)]
    backend: BackendOpts,
    /// Prompt language
    #[arg(long, value_enum)]
    language: Option<LanguageArg>,
    /// Output JSONL (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FixturesArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    count: usize,
    /// Output JSONL (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Optional TOML configuration.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    model: Option<String>,
    base_url: Option<String>,
    api_key: Option<String>,
    language: Option<String>,
    parallelism: Option<usize>,
    /// Extra secondary categories: list of [primary, secondary] pairs.
    #[serde(default)]
    extra_categories: Vec<(String, String)>,
}

impl FileConfig {
    fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    fn catalog(&self) -> Result<CategoryCatalog, CliError> {
        let mut catalog = CategoryCatalog::default();
        for (primary, secondary) in &self.extra_categories {
            let primary = match primary.as_str() {
                "elementary_mathematics" => PrimaryCategory::ElementaryMathematics,
                "modern_mathematics" => PrimaryCategory::ModernMathematics,
                "contemporary_mathematics" => PrimaryCategory::ContemporaryMathematics,
                "applied_mathematics" => PrimaryCategory::AppliedMathematics,
                other => {
                    return Err(CliError::Usage(format!(
                        "unknown primary category '{other}' in extra_categories"
                    )))
                }
            };
            catalog.register(primary, secondary.clone());
        }
        Ok(catalog)
    }
}

enum CliError {
    /// Misuse: bad flags, unreadable inputs, unsupported combinations.
    Usage(String),
    /// The operation itself failed.
    Operational(String),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Operational(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
        Err(CliError::Usage(message)) => {
            eprintln!("usage error: {message}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file_config = FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Evaluate(args) => cmd_evaluate(args, &file_config),
        Command::Bench(args) => cmd_bench(args, &file_config),
        Command::Gold(args) => cmd_gold(args),
        Command::Metrics(args) => cmd_metrics(args, &file_config),
        Command::Tree(args) => cmd_tree(args),
        Command::Gen(args) => cmd_gen(args, &file_config),
        Command::Fixtures(args) => cmd_fixtures(args),
    }
}

fn resolve_language(flag: Option<LanguageArg>, config: &FileConfig) -> Result<PromptLanguage, CliError> {
    if let Some(flag) = flag {
        return Ok(match flag {
            LanguageArg::Chinese => PromptLanguage::Chinese,
            LanguageArg::English => PromptLanguage::English,
        });
    }
    match config.language.as_deref() {
        None => Ok(PromptLanguage::Chinese),
        Some("chinese") | Some("zh") => Ok(PromptLanguage::Chinese),
        Some("english") | Some("en") => Ok(PromptLanguage::English),
        Some(other) => Err(CliError::Usage(format!("unknown language '{other}' in config"))),
    }
}

fn resolve_model(flag: Option<&str>, config: &FileConfig) -> String {
    flag.map(str::to_string)
        .or_else(|| config.model.clone())
        .unwrap_or_else(|| DEFAULT_MODEL.to_string())
}

fn build_backend(
    opts: &BackendOpts,
    config: &FileConfig,
) -> Result<Box<dyn CompletionBackend>, CliError> {
    match opts.backend {
        BackendArg::Mock => {
            let backend = MockBackend::new();
            if let Some(path) = &opts.mock_script {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    CliError::Usage(format!("cannot read mock script {}: {e}", path.display()))
                })?;
                let script: MockScript = serde_json::from_str(&text).map_err(|e| {
                    CliError::Usage(format!("invalid mock script {}: {e}", path.display()))
                })?;
                for response in script.script {
                    backend.push(response);
                }
                for route in script.routes {
                    backend.route(route.contains, route.responses);
                }
            }
            Ok(Box::new(backend))
        }
        BackendArg::Http => {
            let mut http = HttpConfig::from_env();
            if let Some(base_url) = config.base_url.clone() {
                if std::env::var(stepmath::backend::BASE_URL_ENV).is_err() {
                    http.base_url = base_url;
                }
            }
            if http.api_key.is_none() {
                http.api_key = config.api_key.clone();
            }
            if let Some(base_url) = &opts.base_url {
                http.base_url = base_url.clone();
            }
            let backend = HttpBackend::new(http)
                .map_err(|e| CliError::Operational(format!("cannot build http backend: {e}")))?;
            Ok(Box::new(backend))
        }
    }
}

#[derive(Deserialize)]
struct MockScript {
    #[serde(default)]
    script: Vec<String>,
    #[serde(default)]
    routes: Vec<MockRoute>,
}

#[derive(Deserialize)]
struct MockRoute {
    contains: String,
    responses: Vec<String>,
}

fn eval_config(
    eval: &EvalOpts,
    backend: &BackendOpts,
    file_config: &FileConfig,
) -> Result<EvalConfig, CliError> {
    let mut modules = Vec::new();
    for name in &eval.modules {
        if name.trim().is_empty() {
            continue;
        }
        let module = ExternalModule::parse(name)
            .ok_or_else(|| CliError::Usage(format!("unknown module '{name}'")))?;
        modules.push(module);
    }
    let config = EvalConfig {
        mode: eval.mode.into(),
        modules: ModuleSet::of(modules),
        step_hint: eval.step_hint,
        prompt_language: resolve_language(eval.language, file_config)?,
        model_name: resolve_model(backend.model.as_deref(), file_config),
        ..EvalConfig::default()
    };
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(config)
}

fn write_or_print(out: Option<&Path>, content: &str) -> Result<(), CliError> {
    match out {
        Some(path) => {
            if let Some(parent) = path.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent).map_err(|e| {
                        CliError::Usage(format!("cannot create {}: {e}", parent.display()))
                    })?;
                }
            }
            std::fs::write(path, content)
                .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
        }
        None => {
            println!("{content}");
            Ok(())
        }
    }
}

fn classify_agent_error(e: AgentError) -> CliError {
    match e {
        AgentError::Config(_) | AgentError::UnsupportedModules(_) => CliError::Usage(e.to_string()),
        other => CliError::Operational(other.to_string()),
    }
}

fn render_forest(result: &EvaluationResult, format: TreeFormat) -> String {
    match format {
        TreeFormat::Json => export_json(&result.forest),
        TreeFormat::Dot => {
            let texts: BTreeMap<usize, String> = result
                .steps
                .iter()
                .map(|s| (s.index, s.text.clone()))
                .collect();
            export_dot(&result.forest, &texts)
        }
    }
}

fn cmd_evaluate(args: EvaluateArgs, file_config: &FileConfig) -> Result<(), CliError> {
    let problem_text = std::fs::read_to_string(&args.problem_file).map_err(|e| {
        CliError::Usage(format!("cannot read {}: {e}", args.problem_file.display()))
    })?;
    let problem: Problem = serde_json::from_str(&problem_text).map_err(|e| {
        CliError::Usage(format!("invalid problem {}: {e}", args.problem_file.display()))
    })?;

    let solution = match (&args.solution_file, &args.solution_text) {
        (Some(path), None) => std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?,
        (None, Some(text)) => text.clone(),
        _ => {
            return Err(CliError::Usage(
                "exactly one of --solution-file / --solution-text is required".to_string(),
            ))
        }
    };

    let config = eval_config(&args.eval, &args.backend, file_config)?;
    let backend = build_backend(&args.backend, file_config)?;
    let result = stepmath::agent::run_evaluation(&problem, &solution, &config, backend.as_ref())
        .map_err(classify_agent_error)?;

    let body = serde_json::to_string_pretty(&result).expect("results serialize");
    write_or_print(args.out.as_deref(), &body)?;

    if let Some(format) = args.tree {
        let tree_out = match (&args.tree_out, &args.out) {
            (Some(path), _) => Some(path.clone()),
            (None, Some(out)) => Some(out.with_extension(match format {
                TreeFormat::Dot => "dot",
                TreeFormat::Json => "forest.json",
            })),
            (None, None) => None,
        };
        write_or_print(tree_out.as_deref(), &render_forest(&result, format))?;
    }
    Ok(())
}

fn cmd_bench(args: BenchArgs, file_config: &FileConfig) -> Result<(), CliError> {
    let parallelism = args.parallelism.or(file_config.parallelism).unwrap_or(4);
    if parallelism == 0 {
        return Err(CliError::Usage("--parallelism must be >= 1".to_string()));
    }
    let catalog = file_config.catalog()?;
    let mode = if args.strict { LoadMode::Strict } else { LoadMode::Lenient };
    let loaded = load_dataset_with(&args.dataset, mode, &catalog).map_err(usage_from_dataset)?;
    for issue in &loaded.skipped {
        eprintln!("skipping line {} (id {}): {}", issue.line, issue.id, issue.message);
    }
    if loaded.records.is_empty() {
        return Err(CliError::Usage("dataset holds no usable records".to_string()));
    }

    let config = eval_config(&args.eval, &args.backend, file_config)?;
    let backend = build_backend(&args.backend, file_config)?;

    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", args.out_dir.display())))?;
    let results_path = args.out_dir.join("results.jsonl");
    if !args.resume && results_path.exists() {
        std::fs::remove_file(&results_path).map_err(|e| {
            CliError::Usage(format!("cannot reset {}: {e}", results_path.display()))
        })?;
    }

    let options = BenchOptions {
        parallelism,
        checkpoint: Some(results_path.clone()),
        transcript_dir: Some(args.out_dir.join("transcripts")),
    };
    let outcomes = run_benchmark(&loaded.records, &config, backend.as_ref(), &options)
        .map_err(usage_from_dataset)?;

    let failures = outcomes.iter().filter(|o| o.outcome.is_err()).count();
    let inputs = pair_scores_for_metrics(&loaded.records, &outcomes, config.mode)
        .map_err(|e| CliError::Operational(e.to_string()))?;

    if inputs.is_empty() {
        eprintln!("no scored records with gold grades; skipping metrics");
    } else {
        let report = compute_metrics(&inputs.assigned, &inputs.gold, &inputs.slices)
            .map_err(|e| CliError::Operational(e.to_string()))?;
        let label = format!("{} ({})", config.mode.as_str(), config.model_name);
        let json = serde_json::to_string_pretty(&report).expect("report serializes");
        write_or_print(Some(&args.out_dir.join("metrics.json")), &json)?;
        write_or_print(
            Some(&args.out_dir.join("metrics.md")),
            &render_markdown(&report, &label),
        )?;
    }

    eprintln!(
        "evaluated {} records ({} failures); results in {}",
        outcomes.len(),
        failures,
        results_path.display()
    );
    if args.strict && failures > 0 {
        return Err(CliError::Operational(format!(
            "{failures} record(s) failed evaluation"
        )));
    }
    Ok(())
}

fn usage_from_dataset(e: DatasetError) -> CliError {
    match e {
        DatasetError::Record { .. } => CliError::Operational(e.to_string()),
        other => CliError::Usage(other.to_string()),
    }
}

fn cmd_gold(args: GoldArgs) -> Result<(), CliError> {
    let loaded = load_dataset_strict(&args.dataset).map_err(usage_from_dataset)?;
    let mut lines = String::new();
    let mut filled = 0usize;
    for mut record in loaded.records {
        if record.annotation.is_some() {
            let gold = gold_score(&record).map_err(|e| CliError::Operational(e.to_string()))?;
            record.gold = Some(gold);
            filled += 1;
        }
        lines.push_str(&serde_json::to_string(&record).expect("records serialize"));
        lines.push('\n');
    }
    write_or_print(args.out.as_deref(), lines.trim_end_matches('\n'))?;
    eprintln!("gold filled for {filled} annotated record(s)");
    Ok(())
}

fn load_dataset_strict(path: &Path) -> Result<stepmath::bench::LoadedDataset, DatasetError> {
    load_dataset_with(path, LoadMode::Strict, &CategoryCatalog::default())
}

fn cmd_metrics(args: MetricsArgs, file_config: &FileConfig) -> Result<(), CliError> {
    let catalog = file_config.catalog()?;
    let loaded = load_dataset_with(&args.dataset, LoadMode::Lenient, &catalog)
        .map_err(usage_from_dataset)?;
    let outcomes = load_outcomes(&args.results).map_err(usage_from_dataset)?;
    if outcomes.is_empty() {
        return Err(CliError::Usage("results file holds no outcomes".to_string()));
    }
    let mode = outcomes
        .iter()
        .find_map(|o| o.outcome.as_ref().ok().map(|r| r.mode))
        .unwrap_or(EvalMode::Agent);
    let inputs = pair_scores_for_metrics(&loaded.records, &outcomes, mode)
        .map_err(|e| CliError::Operational(e.to_string()))?;
    let report = compute_metrics(&inputs.assigned, &inputs.gold, &inputs.slices)
        .map_err(|e| CliError::Operational(e.to_string()))?;

    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    write_or_print(args.out_json.as_deref(), &json)?;
    if let Some(md) = &args.out_md {
        write_or_print(Some(md), &render_markdown(&report, mode.as_str()))?;
    }
    Ok(())
}

fn cmd_tree(args: TreeArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.result)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", args.result.display())))?;
    let result: EvaluationResult = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("invalid result {}: {e}", args.result.display())))?;
    write_or_print(args.out.as_deref(), &render_forest(&result, args.format))
}

fn cmd_gen(args: GenArgs, file_config: &FileConfig) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.problems)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", args.problems.display())))?;
    let mut problems = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let problem: Problem = serde_json::from_str(line)
            .map_err(|e| CliError::Usage(format!("line {}: invalid problem: {e}", i + 1)))?;
        problems.push(problem);
    }
    let language = resolve_language(args.language, file_config)?;
    let model = resolve_model(args.backend.model.as_deref(), file_config);
    let backend = build_backend(&args.backend, file_config)?;
    let outcomes =
        stepmath::bench::generate_solutions(&problems, backend.as_ref(), &model, language);

    let mut lines = String::new();
    for GenerationOutcome { problem_id, outcome } in &outcomes {
        let value = match outcome {
            Ok(solution) => serde_json::json!({
                "problem_id": problem_id,
                "generator": model,
                "solution_text": solution,
            }),
            Err(error) => serde_json::json!({
                "problem_id": problem_id,
                "generator": model,
                "error": error,
            }),
        };
        lines.push_str(&value.to_string());
        lines.push('\n');
    }
    write_or_print(args.out.as_deref(), lines.trim_end_matches('\n'))
}

fn cmd_fixtures(args: FixturesArgs) -> Result<(), CliError> {
    if args.count == 0 {
        return Err(CliError::Usage("--count must be >= 1".to_string()));
    }
    let records = synth_fixtures(args.seed, args.count);
    let mut lines = String::new();
    for record in &records {
        lines.push_str(&serde_json::to_string(record).expect("records serialize"));
        lines.push('\n');
    }
    write_or_print(args.out.as_deref(), lines.trim_end_matches('\n'))
}
