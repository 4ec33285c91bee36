use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ats_core::trace::from_jsonl;
use ats_core::Rule;
use tempfile::TempDir;

fn ats(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ats"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn scenario(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn matched_pair_trace() {
    let dir = TempDir::new().unwrap();
    let f = scenario(&dir, "pair.txt", "limit buy 5 2 1\nlimit sell 5 2 2\n");
    let out = ats(&["run", s(&f)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let rules: Vec<Rule> = from_jsonl(&stdout(&out))
        .unwrap()
        .iter()
        .map(|r| r.rule)
        .collect();
    assert_eq!(
        rules,
        [Rule::Enqueue, Rule::LimitEmpty, Rule::Enqueue, Rule::Limit1]
    );

    let out = ats(&["run", s(&f), "--drain", "batch"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let recs = from_jsonl(&stdout(&out)).unwrap();
    let rules: Vec<Rule> = recs.iter().map(|r| r.rule).collect();
    assert_eq!(
        rules,
        [Rule::Enqueue, Rule::Enqueue, Rule::LimitEmpty, Rule::Limit1]
    );
    let fill = recs[3].fill.as_ref().unwrap();
    assert_eq!((fill.resting_id.0, fill.price.0, fill.qty.0), (1, 5, 2));
    assert_eq!((recs[3].digest.bid, recs[3].digest.ask), (None, None));
}

#[test]
fn empty_scenario_gives_empty_trace() {
    let dir = TempDir::new().unwrap();
    let f = scenario(&dir, "empty.txt", "# nothing here\n");
    let out = ats(&["run", s(&f)]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).is_empty());
}

#[test]
fn trace_out_file_replays_byte_identically() {
    let dir = TempDir::new().unwrap();
    let f = scenario(
        &dir,
        "s.txt",
        "limit buy 5 3 1\nlimit buy 5 1 2\nmarket sell 2 3\ncancel buy 5 2\nlimit sell 4 5 4\n",
    );
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    assert_eq!(
        ats(&["run", s(&f), "--trace-out", s(&a)]).status.code(),
        Some(0)
    );
    assert_eq!(
        ats(&["run", s(&f), "--trace-out", s(&b)]).status.code(),
        Some(0)
    );
    let (a, b) = (fs::read(a).unwrap(), fs::read(b).unwrap());
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

#[test]
fn parse_error_names_the_line_and_exits_1() {
    let dir = TempDir::new().unwrap();
    let f = scenario(&dir, "bad.txt", "limit buy 5 2 1\n\nlimit buy five 2 2\n");
    let out = ats(&["run", s(&f)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));
}

#[test]
fn missing_file_and_duplicate_ids_exit_1() {
    assert_eq!(
        ats(&["run", "/nonexistent/scenario.txt"]).status.code(),
        Some(1)
    );
    let dir = TempDir::new().unwrap();
    let f = scenario(&dir, "dup.txt", "limit buy 5 2 1\nlimit sell 6 2 1\n");
    assert_eq!(ats(&["check", s(&f)]).status.code(), Some(1));
}

#[test]
fn check_passes_all_permutations() {
    let dir = TempDir::new().unwrap();
    let f = scenario(
        &dir,
        "s.txt",
        "limit buy 5 2 1\nlimit sell 5 1 2\nmarket sell 2 3\ncancel buy 5 1\n",
    );
    let out = ats(&["check", s(&f), "--mode", "permutations"]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}{}",
        stdout(&out),
        stderr(&out)
    );
}

#[test]
fn check_reports_injected_fault() {
    let dir = TempDir::new().unwrap();
    let f = scenario(
        &dir,
        "s.txt",
        "limit buy 5 1 1\nlimit sell 5 1 2\nlimit sell 7 1 3\n",
    );
    assert_eq!(ats(&["check", s(&f)]).status.code(), Some(0));
    let out = ats(&["check", s(&f), "--inject-fault", "skip-price-removal"]);
    assert_eq!(out.status.code(), Some(2));
    let text = stdout(&out);
    assert!(text.contains("no-locked-or-crossed"), "{text}");
    assert!(text.contains("FAIL"), "{text}");
}

#[test]
fn check_writes_report_lines() {
    let dir = TempDir::new().unwrap();
    let f = scenario(&dir, "s.txt", "limit buy 5 1 1\nlimit sell 5 1 2\n");
    let report = dir.path().join("report.jsonl");
    let out = ats(&[
        "check",
        s(&f),
        "--mode",
        "random:3",
        "--seed",
        "7",
        "--report-out",
        s(&report),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(report).unwrap();
    assert_eq!(text.lines().count(), 6);
    for line in text.lines() {
        serde_json::from_str::<serde_json::Value>(line).unwrap();
    }
}

#[test]
fn enumerate_exit_codes() {
    let ok = ats(&[
        "enumerate",
        "--max-orders",
        "2",
        "--kinds",
        "limit,market,cancel",
    ]);
    assert_eq!(ok.status.code(), Some(0), "{}", stderr(&ok));
    assert!(stdout(&ok).starts_with("search space: "));

    let limits_only = ats(&[
        "enumerate",
        "--max-orders",
        "3",
        "--prices",
        "1,2",
        "--qtys",
        "1",
        "--kinds",
        "limit",
    ]);
    assert_eq!(
        limits_only.status.code(),
        Some(0),
        "{}",
        stdout(&limits_only)
    );
    assert!(stdout(&limits_only).starts_with("search space: 84 sequences"));

    let over = ats(&[
        "enumerate",
        "--max-orders",
        "6",
        "--prices",
        "1,2,3",
        "--kinds",
        "limit,market,cancel",
    ]);
    assert_eq!(over.status.code(), Some(3));

    let faulty = ats(&[
        "enumerate",
        "--max-orders",
        "2",
        "--inject-fault",
        "ignore-store-guard",
    ]);
    assert_eq!(faulty.status.code(), Some(2));
    assert!(stdout(&faulty).contains("counterexample"));
}

#[test]
fn step_budget_exhaustion_exits_2() {
    let dir = TempDir::new().unwrap();
    let f = scenario(
        &dir,
        "s.txt",
        "limit sell 5 1 1\nlimit sell 6 1 2\nlimit buy 6 2 3\n",
    );
    let out = ats(&["run", s(&f), "--step-budget", "1"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    let out = ats(&["run", s(&f), "--step-budget", "2"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
}
