use std::path::Path;
use std::process::{Command, Output};

use ckpt_synth::{emit, fixtures};

fn scan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ckpt-scan"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_small_loop(dir: &Path) -> String {
    let path = dir.join("small_loop.trace");
    std::fs::write(&path, emit(&fixtures::small_loop()).unwrap().trace).unwrap();
    path.to_str().unwrap().to_string()
}

fn loop_args(trace: &str) -> Vec<&str> {
    vec!["--trace", trace, "--loop-function", "main", "--loop-start", "13", "--loop-end", "21"]
}

#[test]
fn small_loop_json_lists_critical_variables() {
    let dir = tempfile::tempdir().unwrap();
    let trace = write_small_loop(dir.path());
    let mut args = loop_args(&trace);
    args.extend(["--format", "json", "--workers", "1"]);
    let out = scan(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let critical: Vec<(String, String)> = v["critical"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| (e["name"].as_str().unwrap().into(), e["pattern"].as_str().unwrap().into()))
        .collect();
    let mut critical = critical;
    critical.sort();
    let want: Vec<(String, String)> = [("a", "RAPO"), ("it", "Index"), ("r", "WAR"), ("sum", "Outcome")]
        .iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
    assert_eq!(critical, want);
    assert_eq!(v["loop"]["start_line"], 13);
    assert_eq!(v["critical"][0]["declared_at"]["function"], "main");
}

#[test]
fn text_output_is_default() {
    let dir = tempfile::tempdir().unwrap();
    let trace = write_small_loop(dir.path());
    let out = scan(&loop_args(&trace));
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("loop: main lines 13-21\n"), "{text}");
    assert!(text.contains("WAR"));
}

#[test]
fn missing_trace_exits_3_without_output() {
    let out = scan(&loop_args("/nonexistent/trace.txt"));
    assert_eq!(out.status.code(), Some(3));
    assert!(out.stdout.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: cannot read trace"));
}

#[test]
fn malformed_trace_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.trace");
    std::fs::write(&path, "I|1|main|13:1|e|Load\nO|1|64|1|x\n").unwrap();
    let out = scan(&loop_args(path.to_str().unwrap()));
    assert_eq!(out.status.code(), Some(3));
    assert!(out.stdout.is_empty());
}

#[test]
fn unknown_loop_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let trace = write_small_loop(dir.path());
    let out = scan(&["--trace", &trace, "--loop-function", "nowhere", "--loop-start", "1", "--loop-end", "5"]);
    assert_eq!(out.status.code(), Some(2));
    let out = scan(&["--trace", &trace, "--loop-function", "main", "--loop-start", "21", "--loop-end", "13"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn worker_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cg.trace");
    std::fs::write(&path, emit(&fixtures::cg()).unwrap().trace).unwrap();
    let trace = path.to_str().unwrap();
    let run = |w: &str| {
        scan(&[
            "--trace", trace, "--loop-function", "main", "--loop-start", "17", "--loop-end", "21",
            "--format", "json", "--workers", w,
        ])
    };
    let one = run("1");
    let eight = run("8");
    assert!(one.status.success());
    assert_eq!(one.stdout, eight.stdout);
    assert_eq!(one.stdout, run("1").stdout);
}

#[test]
fn dump_ddg_writes_both_graphs() {
    let dir = tempfile::tempdir().unwrap();
    let trace = write_small_loop(dir.path());
    let dot = dir.path().join("g.dot");
    let mut args = loop_args(&trace);
    args.extend(["--dump-ddg", dot.to_str().unwrap()]);
    let out = scan(&args);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&dot).unwrap();
    assert!(text.contains("digraph complete {"));
    assert!(text.contains("digraph contracted {"));
}

#[test]
fn outcome_check_warns_on_stderr_only() {
    let mut prog = fixtures::small_loop();
    prog.post_loop.clear();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t");
    std::fs::write(&path, emit(&prog).unwrap().trace).unwrap();
    let mut args = loop_args(path.to_str().unwrap());
    args.push("--check-outcome-after-loop");
    let out = scan(&args);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("sum"));
}

#[test]
fn zero_workers_is_rejected() {
    let mut args = loop_args("x");
    args.extend(["--workers", "0"]);
    assert_eq!(scan(&args).status.code(), Some(2));
}
