use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use strongcomp::io::read_snapshot;
use strongcomp::solver::FieldSet;

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_strongcomp"))
        .args(args)
        .env("SOURCE_DATE_EPOCH", "0")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn no_subcommand_prints_usage_and_exits_2() {
    let out = run(&[]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(code(&run(&["frobnicate"])), 2);
}

#[test]
fn config_errors_exit_2_with_one_line() {
    let out = run(&["solve", "--config", "/definitely/missing.toml"]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(err.trim().lines().count(), 1, "{err}");

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[model]\nlambda = 1\nlamda = 2\n").unwrap();
    let out = run(&["solve", "--config", path(&bad), "--out", path(dir.path())]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    let out = run(&["solve", "--set", "nonsense=1", "--out", path(dir.path())]);
    assert_eq!(code(&out), 2);
    let out = run(&["analyze", "--out", path(dir.path())]);
    assert_eq!(code(&out), 2);
}

#[test]
fn solve_scenario_a_recovers_constant_equilibrium() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["solve", "--config", path(&config("scenario_a.toml")), "--out", path(dir.path())]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let (state, meta) = read_snapshot(&dir.path().join("state.txt")).unwrap();
    assert!(state.distance(&FieldSet::constant(state.grid(), 0.2, &[0.8])) <= 1e-6);
    assert_eq!(meta.timestamp, "0");
    assert!(dir.path().join("solve.json").exists());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = run(&["solve", "--config", path(&config("scenario_a.toml")), "--out", path(d.path())]);
        assert_eq!(code(&out), 0);
    }
    for f in ["state.txt", "solve.tsv", "solve.json"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn unconverged_solve_is_a_check_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "solve",
        "--config",
        path(&config("scenario_a.toml")),
        "--set",
        "max_steps=2",
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn sweep_then_analyze_and_eig() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = dir.path().join("sweep");
    let out = run(&[
        "sweep",
        "--config",
        path(&config("scenario_b.toml")),
        "--set",
        "grid.counts=[201]",
        "--set",
        "count=3",
        "--out",
        path(&sweep),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let overlap = std::fs::read_to_string(sweep.join("overlap.tsv")).unwrap();
    assert_eq!(overlap.lines().count(), 4);
    assert!(overlap.starts_with("# beta\toverlap_12\tscaled_overlap_12\n"));
    assert!(sweep.join("decay.tsv").exists() && sweep.join("holder.tsv").exists());

    let snap = format!("analysis.snapshot={}", path(&sweep.join("state_02.txt")));
    let analysis = dir.path().join("analysis");
    let out = run(&["analyze", "--set", &snap, "--set", "threshold=0.01", "--out", path(&analysis)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let bounds = std::fs::read_to_string(analysis.join("bounds.tsv")).unwrap();
    assert_eq!(bounds.lines().count(), 6);
    for f in ["segregation", "complementarity", "faber_krahn", "survivors"] {
        assert!(analysis.join(format!("{f}.json")).exists(), "{f}");
    }

    let out = run(&["eig", "--set", &snap, "--out", path(&dir.path().join("eig"))]);
    assert_eq!(code(&out), 0);
    let eig = std::fs::read_to_string(dir.path().join("eig/eig.tsv")).unwrap();
    assert_eq!(eig.lines().count(), 3);
}

#[test]
fn verify_suite_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["verify", "--out", path(dir.path())]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(code(&out), 0, "{stdout}");
    assert_eq!(stdout.lines().filter(|l| l.contains("[PASS]")).count(), 10);
}
