//! End-to-end tests of the `stepmath` binary: exit codes, file outputs,
//! determinism, and option precedence.

use std::io::{Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::{Arc, Mutex};

use stepmath::bench::{synth_fixtures, DatasetRecord};
use stepmath::core::{Difficulty, PrimaryCategory, Problem, ProblemType};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stepmath"))
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin()
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn assert_exit(output: &Output, code: i32) {
    assert_eq!(
        output.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

fn write_file(dir: &Path, name: &str, content: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, content).unwrap();
    path
}

fn sample_problem(reference: Option<&str>) -> Problem {
    Problem {
        id: "cli-p1".to_string(),
        statement: "已知 a = 2 + 1，b = a - 2，求 a 和 b 的值。".to_string(),
        problem_type: ProblemType::Calculation,
        category_primary: PrimaryCategory::ElementaryMathematics,
        category_secondary: "Arithmetic".to_string(),
        difficulty: Difficulty::Easy,
        constraint: Some("以逗号分隔".to_string()),
        reference_answer: reference.map(str::to_string),
    }
}

fn agent_verdict_script() -> String {
    serde_json::json!({
        "script": [
            "分析……\n{\"（1）a=3\": 1, \"（2）b=1\": 1, \"（3）代入检查\": 0, \"（4）结论\": 0, \"（5）最终答案 3,1\": 1, \"最终得分\": 9, \"错误链\": \"(3)-(4)-(6), (5)-(6)\"}"
        ]
    })
    .to_string()
}

#[test]
fn help_exits_zero_for_every_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    for sub in [
        None,
        Some("evaluate"),
        Some("bench"),
        Some("gold"),
        Some("metrics"),
        Some("tree"),
        Some("gen"),
        Some("fixtures"),
    ] {
        let mut args = Vec::new();
        if let Some(sub) = sub {
            args.push(sub);
        }
        args.push("--help");
        let output = run(&args, dir.path());
        assert_exit(&output, 0);
        let text = String::from_utf8_lossy(&output.stdout);
        assert!(text.contains("Usage"), "help for {sub:?} lacks usage");
    }
}

#[test]
fn fixtures_are_deterministic_with_exact_splits() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a.jsonl");
    let out_b = dir.path().join("b.jsonl");
    for out in [&out_a, &out_b] {
        let output = run(
            &["fixtures", "--seed", "1", "--count", "200", "--out", out.to_str().unwrap()],
            dir.path(),
        );
        assert_exit(&output, 0);
    }
    let a = std::fs::read(&out_a).unwrap();
    let b = std::fs::read(&out_b).unwrap();
    assert_eq!(a, b, "same seed must produce identical bytes");

    let records: Vec<DatasetRecord> = String::from_utf8(a)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(records.len(), 200);
    let types = |t| records.iter().filter(|r| r.problem_type == t).count();
    assert_eq!(
        (types(ProblemType::Calculation), types(ProblemType::Proof), types(ProblemType::OpenEnded)),
        (145, 50, 5)
    );

    let output = run(&["fixtures", "--count", "0"], dir.path());
    assert_exit(&output, 2);
}

#[test]
fn evaluate_writes_result_and_tree() {
    let dir = tempfile::tempdir().unwrap();
    let problem = write_file(
        dir.path(),
        "problem.json",
        &serde_json::to_string(&sample_problem(Some("3,1"))).unwrap(),
    );
    let script = write_file(dir.path(), "script.json", &agent_verdict_script());
    let out = dir.path().join("result.json");

    let output = run(
        &[
            "evaluate",
            "--problem-file", problem.to_str().unwrap(),
            "--solution-text", "a=3，b=1，最终答案：【3,1】",
            "--backend", "mock",
            "--mock-script", script.to_str().unwrap(),
            "--out", out.to_str().unwrap(),
            "--tree", "dot",
        ],
        dir.path(),
    );
    assert_exit(&output, 0);

    let result: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    // Local rescore: 6*(3/4) + 4*1 = 8.5 -> 9? steps are [1,1,0,0,1]:
    // prefix sum 2 of 4 -> 6*0.5 + 4 = 7.
    assert_eq!(result["final_score"], 7);
    assert_eq!(result["reported_final"], 9);
    assert_eq!(result["score_mismatch"], true);
    // Chinese step text round-trips losslessly.
    assert_eq!(result["steps"][4]["text"], "最终答案 3,1");

    let dot = std::fs::read_to_string(dir.path().join("result.dot")).unwrap();
    assert_eq!(dot.matches("label=").count(), 4);
    assert_eq!(dot.matches("->").count(), 3);
}

#[test]
fn evaluate_exit_codes_for_misuse_and_failure() {
    let dir = tempfile::tempdir().unwrap();
    let problem = write_file(
        dir.path(),
        "problem.json",
        &serde_json::to_string(&sample_problem(None)).unwrap(),
    );

    // Unsupported module combination: usage error.
    let output = run(
        &[
            "evaluate",
            "--problem-file", problem.to_str().unwrap(),
            "--solution-text", "x",
            "--modules", "simplicity,difficulty",
            "--backend", "mock",
        ],
        dir.path(),
    );
    assert_exit(&output, 2);

    // Rule-based matching without a reference answer: evaluation error.
    let output = run(
        &[
            "evaluate",
            "--problem-file", problem.to_str().unwrap(),
            "--solution-text", "最终答案:【3,1】",
            "--mode", "rule-em",
            "--backend", "mock",
        ],
        dir.path(),
    );
    assert_exit(&output, 1);

    // Neither --solution-file nor --solution-text: usage error.
    let output = run(
        &["evaluate", "--problem-file", problem.to_str().unwrap(), "--backend", "mock"],
        dir.path(),
    );
    assert_exit(&output, 2);
}

fn fixture_dataset(dir: &Path, count: usize) -> PathBuf {
    let records = synth_fixtures(1, count);
    let mut body = String::new();
    for record in &records {
        body.push_str(&serde_json::to_string(record).unwrap());
        body.push('\n');
    }
    write_file(dir, "dataset.jsonl", &body)
}

#[test]
fn bench_is_deterministic_and_resumes_without_new_calls() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = fixture_dataset(dir.path(), 8);

    // Sequential FIFO script: one rule-based verdict per record. RuleEM does
    // not call the backend at all, so use mode v2 with a scored script.
    let responses: Vec<String> = (0..8).map(|i| format!("{{\"score\": {}}}", i % 11)).collect();
    let script = write_file(
        dir.path(),
        "script.json",
        &serde_json::json!({ "script": responses }).to_string(),
    );

    let out_a = dir.path().join("run-a");
    let out_b = dir.path().join("run-b");
    for out in [&out_a, &out_b] {
        let output = run(
            &[
                "bench",
                dataset.to_str().unwrap(),
                "--mode", "v2",
                "--backend", "mock",
                "--mock-script", script.to_str().unwrap(),
                "--parallelism", "1",
                "--out-dir", out.to_str().unwrap(),
            ],
            dir.path(),
        );
        assert_exit(&output, 0);
    }
    let results_a = std::fs::read(out_a.join("results.jsonl")).unwrap();
    let results_b = std::fs::read(out_b.join("results.jsonl")).unwrap();
    assert_eq!(results_a, results_b);
    let metrics_a = std::fs::read(out_a.join("metrics.json")).unwrap();
    let metrics_b = std::fs::read(out_b.join("metrics.json")).unwrap();
    assert_eq!(metrics_a, metrics_b);
    assert!(out_a.join("metrics.md").exists());

    // Resume over the completed run: the empty mock script would error on any
    // backend call, so all-Ok results prove zero new calls.
    let empty_script = write_file(dir.path(), "empty.json", "{\"script\": []}");
    let output = run(
        &[
            "bench",
            dataset.to_str().unwrap(),
            "--mode", "v2",
            "--backend", "mock",
            "--mock-script", empty_script.to_str().unwrap(),
            "--parallelism", "1",
            "--resume",
            "--out-dir", out_a.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_exit(&output, 0);
    let resumed = std::fs::read_to_string(out_a.join("results.jsonl")).unwrap();
    assert_eq!(resumed.lines().count(), 8);
    for line in resumed.lines() {
        let value: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(value.get("error").is_none(), "resume must not re-evaluate: {line}");
    }

    let output = run(
        &["bench", dataset.to_str().unwrap(), "--parallelism", "0", "--backend", "mock"],
        dir.path(),
    );
    assert_exit(&output, 2);

    // Without --strict, record failures are data, not a failed command; with
    // it, any failure turns into exit 1.
    for (strict, code) in [(false, 0), (true, 1)] {
        let out = dir.path().join(format!("strict-{strict}"));
        let mut args = vec![
            "bench",
            dataset.to_str().unwrap(),
            "--mode", "v2",
            "--backend", "mock",
            "--mock-script", empty_script.to_str().unwrap(),
            "--parallelism", "1",
        ];
        let out_str = out.to_str().unwrap().to_string();
        args.extend_from_slice(&["--out-dir", &out_str]);
        if strict {
            args.push("--strict");
        }
        let output = run(&args, dir.path());
        assert_exit(&output, code);
    }
}

#[test]
fn gold_fills_records_to_match_recomputation() {
    let dir = tempfile::tempdir().unwrap();
    // Strip the gold fields so the command has work to do.
    let records: Vec<DatasetRecord> = synth_fixtures(2, 12)
        .into_iter()
        .map(|mut r| {
            r.gold = None;
            r
        })
        .collect();
    let mut body = String::new();
    for record in &records {
        body.push_str(&serde_json::to_string(record).unwrap());
        body.push('\n');
    }
    let dataset = write_file(dir.path(), "nogold.jsonl", &body);
    let out = dir.path().join("golded.jsonl");

    let output = run(
        &["gold", dataset.to_str().unwrap(), "--out", out.to_str().unwrap()],
        dir.path(),
    );
    assert_exit(&output, 0);

    let filled = std::fs::read_to_string(&out).unwrap();
    for (line, original) in filled.lines().zip(&records) {
        let record: DatasetRecord = serde_json::from_str(line).unwrap();
        let expected = stepmath::bench::gold_score(original).unwrap();
        assert_eq!(record.gold, Some(expected), "record {}", record.id);
    }
}

#[test]
fn metrics_command_reports_from_results() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = fixture_dataset(dir.path(), 6);
    let responses: Vec<String> = (0..6).map(|i| format!("{{\"score\": {}}}", (i * 2) % 11)).collect();
    let script = write_file(
        dir.path(),
        "script.json",
        &serde_json::json!({ "script": responses }).to_string(),
    );
    let out_dir = dir.path().join("bench");
    let output = run(
        &[
            "bench",
            dataset.to_str().unwrap(),
            "--mode", "v2",
            "--backend", "mock",
            "--mock-script", script.to_str().unwrap(),
            "--parallelism", "1",
            "--out-dir", out_dir.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_exit(&output, 0);

    let json_out = dir.path().join("metrics.json");
    let md_out = dir.path().join("metrics.md");
    let output = run(
        &[
            "metrics",
            out_dir.join("results.jsonl").to_str().unwrap(),
            dataset.to_str().unwrap(),
            "--out-json", json_out.to_str().unwrap(),
            "--out-md", md_out.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_exit(&output, 0);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&json_out).unwrap()).unwrap();
    assert_eq!(report["overall"]["count"], 6);
    let md = std::fs::read_to_string(&md_out).unwrap();
    assert!(md.contains("| Gold |"));

    // The standalone report must agree with the one bench wrote.
    let from_bench: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out_dir.join("metrics.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report, from_bench);
}

#[test]
fn tree_exports_from_stored_result() {
    let dir = tempfile::tempdir().unwrap();
    let problem = write_file(
        dir.path(),
        "problem.json",
        &serde_json::to_string(&sample_problem(Some("3,1"))).unwrap(),
    );
    let script = write_file(dir.path(), "script.json", &agent_verdict_script());
    let result_path = dir.path().join("result.json");
    let output = run(
        &[
            "evaluate",
            "--problem-file", problem.to_str().unwrap(),
            "--solution-text", "解答",
            "--backend", "mock",
            "--mock-script", script.to_str().unwrap(),
            "--out", result_path.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_exit(&output, 0);

    let output = run(
        &["tree", result_path.to_str().unwrap(), "--format", "dot"],
        dir.path(),
    );
    assert_exit(&output, 0);
    let dot = String::from_utf8_lossy(&output.stdout);
    assert_eq!(dot.matches("label=").count(), 4);
    assert_eq!(dot.matches("->").count(), 3);

    let output = run(
        &["tree", result_path.to_str().unwrap(), "--format", "json"],
        dir.path(),
    );
    assert_exit(&output, 0);
    let forest =
        stepmath::errortree::parse_forest_json(&String::from_utf8_lossy(&output.stdout)).unwrap();
    assert_eq!(forest.node_count(), 4);
}

#[test]
fn gen_applies_type_specific_prompts() {
    let dir = tempfile::tempdir().unwrap();
    let calculation = sample_problem(None);
    let mut proof = sample_problem(None);
    proof.id = "cli-p2".to_string();
    proof.problem_type = ProblemType::Proof;
    let problems = write_file(
        dir.path(),
        "problems.jsonl",
        &format!(
            "{}\n{}\n",
            serde_json::to_string(&calculation).unwrap(),
            serde_json::to_string(&proof).unwrap()
        ),
    );
    let script = write_file(
        dir.path(),
        "script.json",
        &serde_json::json!({
            "routes": [
                {"contains": "解题过程", "responses": ["解题过程：\n【…】\n\n最终答案：\n【3,1】"]},
                {"contains": "请回答如下数学问题", "responses": ["证明如下……"]}
            ]
        })
        .to_string(),
    );
    let out = dir.path().join("solutions.jsonl");
    let output = run(
        &[
            "gen",
            problems.to_str().unwrap(),
            "--backend", "mock",
            "--mock-script", script.to_str().unwrap(),
            "--out", out.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_exit(&output, 0);
    let body = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<serde_json::Value> = body.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0]["solution_text"].as_str().unwrap().contains("最终答案"));
    assert!(lines[1]["solution_text"].as_str().unwrap().contains("证明"));
}

#[test]
fn model_precedence_flag_over_config_over_default() {
    let dir = tempfile::tempdir().unwrap();
    let problem = write_file(
        dir.path(),
        "problem.json",
        &serde_json::to_string(&sample_problem(Some("3,1"))).unwrap(),
    );
    let config = write_file(dir.path(), "config.toml", "model = \"config-model\"\n");
    let script_body = serde_json::json!({"script": ["{\"score\": 5}", "{\"score\": 5}", "{\"score\": 5}"]}).to_string();
    let script = write_file(dir.path(), "script.json", &script_body);

    let model_of = |extra: &[&str]| -> String {
        let out = dir.path().join("r.json");
        let mut args = vec![
            "evaluate",
            "--problem-file", problem.to_str().unwrap(),
            "--solution-text", "解",
            "--mode", "v2",
            "--backend", "mock",
            "--mock-script", script.to_str().unwrap(),
            "--out", out.to_str().unwrap(),
        ];
        args.extend_from_slice(extra);
        let output = run(&args, dir.path());
        assert_exit(&output, 0);
        let result: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
        result["transcripts"][0]["request"]["model_name"]
            .as_str()
            .unwrap()
            .to_string()
    };

    assert_eq!(model_of(&[]), "gpt-4o"); // built-in default
    assert_eq!(model_of(&["--config", config.to_str().unwrap()]), "config-model");
    assert_eq!(
        model_of(&["--config", config.to_str().unwrap(), "--model", "flag-model"]),
        "flag-model"
    );
}

/// One-shot HTTP responder that records whether it was hit.
struct Responder {
    url: String,
    hits: Arc<Mutex<usize>>,
    handle: Option<std::thread::JoinHandle<()>>,
}

impl Responder {
    fn start(content: &str) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        listener.set_nonblocking(false).unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let hits = Arc::new(Mutex::new(0usize));
        let seen = Arc::clone(&hits);
        let body = serde_json::json!({
            "choices": [{"message": {"role": "assistant", "content": content}}]
        })
        .to_string();
        let handle = std::thread::spawn(move || {
            // Serve until the listener is dropped at test end.
            while let Ok((mut stream, _)) = listener.accept() {
                let mut buf = [0u8; 65536];
                let mut data = Vec::new();
                loop {
                    match stream.read(&mut buf) {
                        Ok(0) => break,
                        Ok(n) => {
                            data.extend_from_slice(&buf[..n]);
                            let text = String::from_utf8_lossy(&data);
                            if let Some(end) = text.find("\r\n\r\n") {
                                let len = text
                                    .lines()
                                    .find_map(|l| {
                                        l.to_ascii_lowercase()
                                            .strip_prefix("content-length:")
                                            .map(|v| v.trim().parse::<usize>().unwrap())
                                    })
                                    .unwrap_or(0);
                                if data.len() >= end + 4 + len {
                                    break;
                                }
                            }
                        }
                        Err(_) => break,
                    }
                }
                *seen.lock().unwrap() += 1;
                let response = format!(
                    "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                    body.len(),
                    body
                );
                let _ = stream.write_all(response.as_bytes());
            }
        });
        Responder {
            url,
            hits,
            handle: Some(handle),
        }
    }

    fn hits(&self) -> usize {
        *self.hits.lock().unwrap()
    }
}

impl Drop for Responder {
    fn drop(&mut self) {
        // The accept loop ends when the process-side connections stop; detach.
        if let Some(handle) = self.handle.take() {
            drop(handle);
        }
    }
}

#[test]
fn base_url_precedence_flag_over_env_over_config() {
    let dir = tempfile::tempdir().unwrap();
    let problem = write_file(
        dir.path(),
        "problem.json",
        &serde_json::to_string(&sample_problem(Some("3,1"))).unwrap(),
    );
    let env_server = Responder::start("{\"score\": 5}");
    let config_server = Responder::start("{\"score\": 5}");
    let flag_server = Responder::start("{\"score\": 5}");
    let config = write_file(
        dir.path(),
        "config.toml",
        &format!("base_url = \"{}\"\n", config_server.url),
    );

    let evaluate = |extra_args: &[&str], env_url: Option<&str>| {
        let mut cmd = bin();
        cmd.args([
            "evaluate",
            "--problem-file", problem.to_str().unwrap(),
            "--solution-text", "解",
            "--mode", "v2",
            "--config", config.to_str().unwrap(),
        ])
        .args(extra_args)
        .current_dir(dir.path());
        match env_url {
            Some(url) => cmd.env("STEPMATH_BASE_URL", url),
            None => cmd.env_remove("STEPMATH_BASE_URL"),
        };
        let output = cmd.output().unwrap();
        assert_exit(&output, 0);
    };

    // Config only.
    evaluate(&[], None);
    assert_eq!(config_server.hits(), 1);

    // Environment beats config.
    evaluate(&[], Some(&env_server.url));
    assert_eq!(env_server.hits(), 1);
    assert_eq!(config_server.hits(), 1);

    // Flag beats environment.
    evaluate(&["--base-url", &flag_server.url], Some(&env_server.url));
    assert_eq!(flag_server.hits(), 1);
    assert_eq!(env_server.hits(), 1);
    assert_eq!(config_server.hits(), 1);
}
