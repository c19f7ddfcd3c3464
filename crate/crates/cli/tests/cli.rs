use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn atelier(args: &[&str], cwd: &Path) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_atelier"));
    cmd.args(args).current_dir(cwd).env_remove("RUST_LOG");
    for (k, _) in std::env::vars().filter(|(k, _)| k.starts_with("ATELIER_")) {
        cmd.env_remove(k);
    }
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn happy_run(cwd: &Path, extra: &[&str]) -> Output {
    run_on(cwd, "sim", extra)
}

fn run_on(cwd: &Path, backend: &str, extra: &[&str]) -> Output {
    let library = fixtures().join("library.txt");
    let adapters = format!("mock:{}", fixtures().join("scenarios/happy.yaml").display());
    let mut args = vec![
        "run",
        "--task",
        "a red cube",
        "--library",
        library.to_str().unwrap(),
        "--backend",
        backend,
        "--adapters",
        &adapters,
        "--seed",
        "3",
    ];
    args.extend_from_slice(extra);
    atelier(&args, cwd)
}

#[test]
fn happy_run_prints_one_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let o = happy_run(dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    let lines: Vec<_> = out.lines().collect();
    assert_eq!(lines.len(), 1);
    assert!(Path::new(lines[0]).is_file() || dir.path().join(lines[0]).is_file());
}

#[test]
fn json_summary_has_the_documented_keys() {
    let dir = tempfile::tempdir().unwrap();
    let o = happy_run(dir.path(), &["--json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["status"], "resolved");
    assert_eq!(v["artifacts"].as_array().unwrap().len(), 1);
    assert_eq!(v["expansions"], 1);
    assert!(v["duration_ms"].is_u64());
}

#[test]
fn repeated_runs_print_the_same_relative_result() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let strip = |o: Output, d: &Path| stdout(&o).replace(&d.display().to_string(), "");
    assert_eq!(strip(happy_run(a.path(), &[]), a.path()), strip(happy_run(b.path(), &[]), b.path()));
}

#[test]
fn missing_task_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = atelier(&["run"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unreachable_backend_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let url = format!("http://127.0.0.1:{port}");
    let o = run_on(dir.path(), &url, &[]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn validate_accepts_a_concrete_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixtures().join("t2i.json");
    let o = atelier(&["validate", f.to_str().unwrap(), "--concrete"], dir.path());
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn validate_reports_a_cycle() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixtures().join("cycle.json");
    let o = atelier(&["validate", f.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let findings: Vec<_> = stdout(&o).lines().filter(|l| l.starts_with("FINDING")).map(String::from).collect();
    assert_eq!(findings.len(), 1);
    assert!(findings[0].contains("cycle"));
}

#[test]
fn list_prints_every_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let lib = fixtures().join("library.txt");
    let o = atelier(&["list", "--library", lib.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 12);
    assert!(out.lines().all(|l| l.split('\t').count() == 3));
}

#[test]
fn ablate_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let suite = fixtures().join("ablation-suite.yaml");
    let report = dir.path().join("report.json");
    let o = atelier(
        &["ablate", "--suite", suite.to_str().unwrap(), "--reps", "100", "--out", report.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    for policy in ["full", "no-tree", "no-feedback"] {
        for key in ["resolve_rate", "pass_rate", "mean_expansions", "ci95"] {
            assert!(!v[policy][key].is_null(), "{policy}.{key}");
        }
    }
}

#[test]
fn too_few_repetitions_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let suite = fixtures().join("ablation-suite.yaml");
    let o = atelier(&["ablate", "--suite", suite.to_str().unwrap(), "--reps", "10"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}
