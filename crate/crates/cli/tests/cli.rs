use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::Duration;

const SMOKE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/data/smoke.jsonl");

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tweetguard"))
}

fn tg(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn head(lines: usize, dir: &Path) -> PathBuf {
    let p = dir.join(format!("head{lines}.jsonl"));
    let text: String = std::fs::read_to_string(SMOKE).unwrap().lines().take(lines).map(|l| format!("{l}\n")).collect();
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn eval_writes_report_and_summary() {
    let o = tg(&["eval", "--classifier", "ht", "--classes", "2", "--preprocess", "on", "--normalize", "minmax-no-outliers", "--adaptive-bow", "on", "--input", SMOKE]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = stdout(&o);
    assert!(csv.starts_with("instances_seen,labeled_seen,accuracy"));
    assert_eq!(csv.lines().count(), 1 + 2000 / 500);
    assert!(stderr(&o).contains("cumulative: accuracy"));

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.csv");
    let o = tg(&["eval", "--classes", "3", "--input", SMOKE, "--output", out.to_str().unwrap(), "--json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let summary: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(summary["records"], 2000);
    assert_eq!(summary["class_names"].as_array().unwrap().len(), 3);
    assert!(std::fs::read_to_string(out).unwrap().contains("f1_hateful"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&tg(&["eval", "--classes", "4", "--input", SMOKE])), 1);
    assert_eq!(code(&tg(&["eval", "--workers", "0", "--input", SMOKE])), 1);
    assert_eq!(code(&tg(&["eval", "--bogus-flag"])), 1);
    assert_eq!(code(&tg(&["eval", "--batch-size", "5", "--batch-interval-ms", "5", "--input", SMOKE])), 1);

    let bad_cfg = dir.path().join("bad.toml");
    std::fs::write(&bad_cfg, "classifier = \"knn\"\n").unwrap();
    assert_eq!(code(&tg(&["eval", "--config", bad_cfg.to_str().unwrap(), "--input", SMOKE])), 1);

    let empty = dir.path().join("empty.jsonl");
    std::fs::write(&empty, "\n\n").unwrap();
    assert_eq!(code(&tg(&["eval", "--input", empty.to_str().unwrap()])), 2);
    assert_eq!(code(&tg(&["eval", "--input", dir.path().join("missing").to_str().unwrap()])), 2);
    let unlabeled = dir.path().join("unlabeled.jsonl");
    let o = tg(&["gen", "--count", "30", "--unlabeled", "--output", unlabeled.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert_eq!(code(&tg(&["eval", "--input", unlabeled.to_str().unwrap()])), 2);
    assert_eq!(code(&tg(&["eval", "--server", "http://127.0.0.1:9", "--input", SMOKE])), 2);
    assert_eq!(code(&tg(&["--help"])), 0);
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("p.toml");
    std::fs::write(&cfg, "classifier = \"slr\"\nclasses = 3\n[learner.slr]\nlearning_rate = 0.05\n").unwrap();
    let o = tg(&["eval", "--config", cfg.to_str().unwrap(), "--input", SMOKE, "--json", "--output", dir.path().join("x").to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let s: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(s["class_names"].as_array().unwrap().len(), 3);
    let o = tg(&["eval", "--config", cfg.to_str().unwrap(), "--classes", "2", "--input", SMOKE, "--json", "--output", dir.path().join("y").to_str().unwrap()]);
    let s: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(s["class_names"].as_array().unwrap().len(), 2);
}

#[test]
fn gen_is_deterministic() {
    let a = tg(&["gen", "--count", "50", "--seed", "7"]);
    let b = tg(&["gen", "--count", "50", "--seed", "7"]);
    assert_eq!(code(&a), 0);
    assert_eq!(stdout(&a).lines().count(), 50);
    assert_eq!(stdout(&a), stdout(&b));
    assert_ne!(stdout(&a), stdout(&tg(&["gen", "--count", "50", "--seed", "8"])));
    assert_eq!(code(&tg(&["gen", "--priors", "0.5,0.5"])), 1);
}

#[test]
fn bench_rows_and_warning() {
    let o = tg(&["bench", "--synthetic", "600", "--workers-list", "1"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 2);
    let o = tg(&["bench", "--synthetic", "600", "--workers-list", "1,2", "--rate", "100"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).lines().count(), 3);
    assert!(stderr(&o).contains("unthrottled"));
    assert_eq!(code(&tg(&["bench", "--synthetic", "10", "--workers-list", "0"])), 1);
}

#[test]
fn tune_grid() {
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("grid.json");
    std::fs::write(&grid, r#"{"split_confidence": [0.001, 0.01], "tie_threshold": [0.05]}"#).unwrap();
    let input = head(800, dir.path());
    let args = ["tune", "--input", input.to_str().unwrap(), "--grid", grid.to_str().unwrap()];
    let o = tg(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = stdout(&o);
    assert_eq!(table.lines().count(), 3);
    assert!(table.starts_with("split_confidence,tie_threshold,f1,accuracy,best"));
    assert_eq!(table, stdout(&tg(&args)));

    let o = tg(&["tune", "--input", input.to_str().unwrap()]);
    assert_eq!(stdout(&o).lines().count(), 2);

    std::fs::write(&grid, r#"{"no_such_param": [1]}"#).unwrap();
    assert_eq!(code(&tg(&args)), 1);
}

#[test]
fn run_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    let o = tg(&[
        "run",
        "--input",
        SMOKE,
        "--batch-size",
        "256",
        "--sample-rate",
        "0.05",
        "--alerts",
        p("alerts.jsonl").to_str().unwrap(),
        "--samples",
        p("samples.jsonl").to_str().unwrap(),
        "--metrics",
        p("metrics.csv").to_str().unwrap(),
        "--model-out",
        p("model.bin").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("records 2000 (parse errors 0)"));
    let alerts = std::fs::read_to_string(p("alerts.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(alerts.lines().next().unwrap()).unwrap();
    for key in ["source_id", "label", "confidence", "emitted_at"] {
        assert!(first.get(key).is_some(), "{key}");
    }
    let samples = std::fs::read_to_string(p("samples.jsonl")).unwrap();
    assert!(samples.lines().count() > 0);
    assert!(samples.contains("\"predicted\""));
    assert!(std::fs::read(p("model.bin")).unwrap().starts_with(b"TGMODEL\0"));
    assert!(std::fs::read_to_string(p("metrics.csv")).unwrap().starts_with("instances_seen"));
}

#[test]
fn remote_server_mode() {
    let mut server = bin().args(["serve", "--bind", "127.0.0.1:0"]).stderr(Stdio::piped()).spawn().unwrap();
    let mut line = String::new();
    BufReader::new(server.stderr.take().unwrap()).read_line(&mut line).unwrap();
    let url = line.trim().strip_prefix("listening on ").expect("announces address").to_string();
    let o = tg(&["eval", "--server", &url, "--input", SMOKE, "--json", "--output", "/dev/null"]);
    server.kill().unwrap();
    let _ = server.wait();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let s: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(s["records"], 2000);
}

#[test]
fn interrupt_flushes_pending_batch() {
    let dir = tempfile::tempdir().unwrap();
    let metrics = dir.path().join("m.csv");
    let mut child = bin()
        .args(["run", "--input", "-", "--batch-size", "100000", "--metrics", metrics.to_str().unwrap(), "--alerts", "/dev/null"])
        .stdin(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut stdin = child.stdin.take().unwrap();
    let text: String = std::fs::read_to_string(SMOKE).unwrap().lines().take(300).map(|l| format!("{l}\n")).collect();
    stdin.write_all(text.as_bytes()).unwrap();
    stdin.flush().unwrap();
    std::thread::sleep(Duration::from_millis(1500));
    Command::new("kill").args(["-INT", &child.id().to_string()]).status().unwrap();
    let out = child.wait_with_output().unwrap();
    drop(stdin);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stderr(&out).contains("interrupted"));
    assert!(stderr(&out).contains("records 300"), "{}", stderr(&out));
    assert!(metrics.exists());
}

/// Every ablation of the evaluation section is a flag combination.
#[test]
fn flag_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let input = head(150, dir.path());
    let mut runs = 0;
    for classifier in ["ht", "arf", "slr"] {
        for classes in ["2", "3"] {
            for preprocess in ["on", "off"] {
                for normalize in ["off", "minmax", "minmax-no-outliers", "zscore"] {
                    for bow in ["on", "off"] {
                        let o = tg(&[
                            "eval", "--classifier", classifier, "--classes", classes, "--preprocess", preprocess,
                            "--normalize", normalize, "--adaptive-bow", bow, "--batch-size", "50",
                            "--input", input.to_str().unwrap(), "--output", "/dev/null",
                        ]);
                        assert_eq!(code(&o), 0, "{classifier} {classes} {preprocess} {normalize} {bow}: {}", stderr(&o));
                        runs += 1;
                    }
                }
            }
        }
    }
    assert_eq!(runs, 96);
}
