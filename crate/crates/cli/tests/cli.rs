use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use soar_core::packet::write_capture;

fn soar(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_soar")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/ctf_first100.pcap")
}

fn deploy_lines(log: &Path) -> usize {
    fs::read_to_string(log).unwrap().lines().filter(|l| l.contains("\"kind\":\"DEPLOY\"")).count()
}

#[test]
fn run_on_fixture_capture_deploys_and_logs() {
    let dir = tempfile::tempdir().unwrap();
    let cap = fixture();
    let o = soar(&["run", "--capture", cap.to_str().unwrap(), "--reference-detectors"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("packets       100"));
    let log = dir.path().join("events.jsonl");
    assert!(fs::metadata(&log).unwrap().len() > 0);
    assert!(deploy_lines(&log) > 0);
    assert!(dir.path().join("vault").is_dir());
}

#[test]
fn empty_capture_runs_clean_with_no_deployments() {
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = Vec::new();
    write_capture(&mut bytes, &[], 0).unwrap();
    fs::write(dir.path().join("empty.pcap"), bytes).unwrap();
    let o = soar(&["run", "--capture", "empty.pcap", "--log", "out/events.jsonl"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(deploy_lines(&dir.path().join("out/events.jsonl")), 0);
}

#[test]
fn unknown_config_key_exits_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "idle_timout = 60\n").unwrap();
    let cap = fixture();
    let o = soar(&["run", "--config", "bad.toml", "--capture", cap.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("idle_timout"), "{}", stderr(&o));
}

#[test]
fn unreachable_runtime_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let toml = "[backend]\nkind = \"exec\"\nruntime = \"/nonexistent/runtime\"\nnetwork = \"decoys\"\n";
    fs::write(dir.path().join("exec.toml"), toml).unwrap();
    let cap = fixture();
    let o = soar(&["run", "--config", "exec.toml", "--capture", cap.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("backend unavailable"), "{}", stderr(&o));
}

#[test]
fn missing_capture_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = soar(&["run", "--capture", "nope.pcap"], dir.path());
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn simulate_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = soar(&["simulate", "ctf_small", "--seed", "7", "--out", out], dir.path());
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    for f in ["report.csv", "events.jsonl", "capture.pcap", "run.json", "samples.jsonl"] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        let b = fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs");
    }
}

#[test]
fn unknown_scenario_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = soar(&["simulate", "no_such_scenario", "--out", "x"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("ctf_small"));
}

#[test]
fn trained_tree_evaluates_above_99_on_held_out_rows() {
    let dir = tempfile::tempdir().unwrap();
    let run = |args: &[&str]| {
        let o = soar(args, dir.path());
        assert_eq!(o.status.code(), Some(0), "{:?}: {}", args, stderr(&o));
        stdout(&o)
    };
    run(&["gen", "--task", "ddos", "--per-class", "1000", "--seed", "3", "--out", "corpus"]);
    run(&[
        "train",
        "--task",
        "ddos",
        "--family",
        "tree",
        "--data",
        "corpus/ddos.csv",
        "--out",
        "m.json",
        "--holdout",
        "0.25",
    ]);
    let out = run(&["eval", "--model", "m.json", "--data", "corpus/ddos.csv", "--holdout", "0.25"]);
    assert!(out.contains("on 500 rows"), "{out}");
    let acc: f64 = out
        .lines()
        .find_map(|l| l.strip_prefix("accuracy"))
        .and_then(|v| v.trim().parse().ok())
        .expect("accuracy line");
    assert!(acc >= 99.0, "{out}");
}

#[test]
fn report_prints_top_engagement_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = soar(&["simulate", "ctf_small", "--compare", "--out", "cmp"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = soar(
        &["report", "--run", "cmp/dynamic", "--against", "cmp/static", "--top", "10", "--csv", "again.csv"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let table: Vec<&str> = out.lines().skip_while(|l| !l.starts_with("| Dynamic")).collect();
    assert!(table[1].contains("Attacker IP") && table[1].matches("Time").count() == 2, "{out}");
    let rows = &table[3..];
    assert!(!rows.is_empty() && rows.len() <= 10);
    assert!(rows.iter().all(|r| r.matches(" sec").count() >= 1));
    assert_eq!(
        fs::read(dir.path().join("again.csv")).unwrap(),
        fs::read(dir.path().join("cmp/dynamic/report.csv")).unwrap()
    );
}
