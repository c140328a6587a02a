use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Output, Stdio};
use std::time::Duration;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_taletiles"))
}

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(output: &Output) -> String {
    String::from_utf8(output.stdout.clone()).unwrap()
}

#[test]
fn count_empty_rule() {
    let rules = root().join("fixtures/rules/empty.json");
    let out = run(&["count", "--rules", rules.to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(stdout(&out), "142506\n");
}

#[test]
fn count_fast_matches_oracle() {
    let rules = root().join("fixtures/rules/dinner.json");
    let fast = run(&["count", "--rules", rules.to_str().unwrap()]);
    let oracle = run(&["count", "--oracle", "--rules", rules.to_str().unwrap()]);
    assert_eq!(stdout(&fast), "38128\n");
    assert_eq!(stdout(&oracle), stdout(&fast));
}

#[test]
fn count_malformed_rule_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"concept": "count_limit", "params": {"property": "type"}}"#).unwrap();
    let out = run(&["count", "--rules", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&["evolve", "--runs", "1"]).status.code(), Some(2));
    assert_eq!(run(&["evolve", "--target", "ten"]).status.code(), Some(2));
    assert_eq!(run(&["evolve", "--target", "5", "--evaluator", "vibes"]).status.code(), Some(2));
    assert_eq!(run(&["evolve", "--target", "5", "--mutation", "1.5"]).status.code(), Some(2));
    assert_eq!(run(&["evolve", "--target", "999999999"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn evolve_full_target() {
    let out = run(&["evolve", "--target", "142506", "--runs", "1", "--seed", "1"]);
    assert!(out.status.success());
    let lines: Vec<serde_json::Value> = stdout(&out).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["accuracy"], 1.0);
    assert_eq!(lines[0]["achieved"], 142506);
}

#[test]
fn evolve_summary_record() {
    let out = run(&["evolve", "--target", "random", "--runs", "3", "--pop", "20", "--max-gen", "3", "--elite", "2"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    let summary: serde_json::Value = serde_json::from_str(lines[3]).unwrap();
    for field in ["runs", "mean_accuracy", "stddev_accuracy", "mean_generations", "stddev_generations"] {
        assert!(summary["summary"][field].is_number(), "{field}");
    }
    assert!(!out.stderr.is_empty());
}

#[test]
fn evolve_entropy_evaluator() {
    let out =
        run(&["evolve", "--evaluator", "entropy", "--target", "20.5", "--pop", "20", "--max-gen", "5", "--elite", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let first: serde_json::Value = serde_json::from_str(stdout(&out).lines().next().unwrap()).unwrap();
    assert_eq!(first["target"], 20.5);
}

#[test]
fn evolve_is_reproducible_across_thread_counts() {
    let args = [
        "evolve",
        "--target",
        "random",
        "--runs",
        "3",
        "--pop",
        "40",
        "--max-gen",
        "8",
        "--elite",
        "4",
        "--seed",
        "11",
    ];
    let one = run(&[&args[..], &["--threads", "1"]].concat());
    let four = run(&[&args[..], &["--threads", "4"]].concat());
    let default = run(&args);
    assert!(one.status.success());
    assert_eq!(one.stdout, four.stdout);
    assert_eq!(one.stdout, default.stdout);
}

fn play(input: &str) -> Output {
    let mut child = bin()
        .args(["play", "--seed", "3", "--pop", "30", "--max-gen", "10", "--elite", "3"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

#[test]
fn play_matches_golden_transcript() {
    let input = std::fs::read_to_string(root().join("fixtures/play/animals_seed3.in")).unwrap();
    let out = play(&input);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let golden = root().join("fixtures/play/animals_seed3.out");
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&golden, &out.stdout).unwrap();
    }
    assert_eq!(stdout(&out), std::fs::read_to_string(golden).unwrap());
}

#[test]
fn play_quits_cleanly() {
    let out = play("quit\n");
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).ends_with("Goodbye!\n"));
    let out = play("");
    assert_eq!(out.status.code(), Some(0));
}

struct Server(std::process::Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn free_port() -> u16 {
    std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

#[test]
fn serve_answers_health_and_reports_port_conflict() {
    let data = tempfile::tempdir().unwrap();
    let port = free_port().to_string();
    let _server = Server(
        bin()
            .args(["serve", "--port", &port, "--narrator", "stub", "--data-dir", data.path().to_str().unwrap()])
            .env_remove("TALETILES_API_KEY")
            .env_remove("OPENAI_API_KEY")
            .stderr(Stdio::null())
            .spawn()
            .unwrap(),
    );
    let url = format!("http://127.0.0.1:{port}/health");
    let mut health = None;
    for _ in 0..100 {
        if let Ok(response) = reqwest::blocking::get(&url) {
            health = Some(response.json::<serde_json::Value>().unwrap());
            break;
        }
        std::thread::sleep(Duration::from_millis(50));
    }
    assert_eq!(health, Some(serde_json::json!({"status": "ok"})));

    let clash = run(&["serve", "--port", &port, "--data-dir", data.path().to_str().unwrap()]);
    assert_eq!(clash.status.code(), Some(1));
    let message = String::from_utf8_lossy(&clash.stderr);
    assert!(message.contains("already in use"), "{message}");
}
