use std::path::{Path, PathBuf};

use netflow::cli::main_with_output;

fn netflow(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let argv = std::iter::once("netflow").chain(args.iter().copied());
    let code = main_with_output(argv, &mut out);
    (code, String::from_utf8(out).unwrap())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn oracle(dir: &Path, name: &str, cells: &str) -> PathBuf {
    let path = dir.join(format!("{name}.json"));
    let (code, _) = netflow(&["oracle", name, "--cells", cells, "--out", s(&path)]);
    assert_eq!(code, 0);
    path
}

#[test]
fn steiner_run_reaches_the_horizon() {
    let dir = tempfile::tempdir().unwrap();
    let net = oracle(dir.path(), "steiner", "16");
    let traj = dir.path().join("traj.csv");
    let (code, out) = netflow(&[
        "run", "--network", s(&net), "--t-end", "0.01", "--dt", "1e-3", "--out", s(&traj), "--expect-horizon",
    ]);
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("horizon_reached"), "{out}");
    assert!(traj.exists());
    assert!(dir.path().join("traj.diagnostics.csv").exists());
    assert!(dir.path().join("traj.meta.json").exists());
}

#[test]
fn check_wellposed_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out) = netflow(&["check-wellposed", "--network", s(&oracle(dir.path(), "steiner", "16"))]);
    assert_eq!(code, 0);
    assert!(out.contains("PASS"));
    assert_eq!(out.matches("min singular value").count(), 5);

    let bad = oracle(dir.path(), "parallel-tangents", "16");
    let (code, out) = netflow(&["check-wellposed", "--network", s(&bad), "--lambda", "1,0;2,1"]);
    assert_eq!(code, 2);
    assert!(out.contains("FAIL"));
}

#[test]
fn diagnose_flags_a_broken_angle_condition() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out) = netflow(&["diagnose", "--network", s(&oracle(dir.path(), "bumped", "32"))]);
    assert_eq!(code, 0);
    assert!(out.contains("admissible"));
    let (code, out) = netflow(&["diagnose", "--network", s(&oracle(dir.path(), "parallel-tangents", "16"))]);
    assert_eq!(code, 2);
    assert!(out.contains("angle_residual"));
    assert!(out.contains("not admissible"));
}

#[test]
fn collapse_with_expect_horizon_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let net = oracle(dir.path(), "infeasible", "16");
    let (code, out) = netflow(&["run", "--network", s(&net), "--t-end", "2", "--dt", "1e-3", "--expect-horizon"]);
    assert_eq!(code, 3, "{out}");
    assert!(out.contains("length_collapse(2)"));
    let (code, _) = netflow(&["run", "--network", s(&net), "--t-end", "2", "--dt", "1e-3"]);
    assert_eq!(code, 0);
}

#[test]
fn validation_failures_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let garbage = dir.path().join("garbage.json");
    std::fs::write(&garbage, "{ not json").unwrap();
    assert_eq!(netflow(&["diagnose", "--network", s(&garbage)]).0, 2);

    let coarse = dir.path().join("coarse.json");
    assert_eq!(netflow(&["oracle", "steiner", "--cells", "4", "--out", s(&coarse)]).0, 2);
    assert!(!coarse.exists());

    let net = oracle(dir.path(), "steiner", "16");
    assert_eq!(netflow(&["run", "--network", s(&net), "--dt=0"]).0, 2);
    assert_eq!(netflow(&["run", "--network", s(&net), "--resample", "maybe"]).0, 2);
    assert_eq!(netflow(&["run"]).0, 2);
    assert_eq!(netflow(&["frobnicate"]).0, 2);
    assert_eq!(netflow(&["--help"]).0, 0);
}

#[test]
fn missing_file_is_an_io_failure() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(netflow(&["diagnose", "--network", s(&dir.path().join("absent.json"))]).0, 1);
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let net = oracle(dir.path(), "steiner", "16");
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"dt": 0.005, "t_end": 0.02}"#).unwrap();
    let traj = dir.path().join("t.jsonl");
    let (code, _) = netflow(&[
        "run", "--network", s(&net), "--config", s(&cfg), "--dt", "0.01", "--out", s(&traj), "--format", "jsonl",
    ]);
    assert_eq!(code, 0);
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("t.meta.json")).unwrap()).unwrap();
    let text = meta.to_string();
    assert!(text.contains("0.01"), "{text}");
    assert!(text.contains("0.02"), "{text}");
    // initial state plus two steps
    assert_eq!(std::fs::read_to_string(&traj).unwrap().lines().count(), 3);

    std::fs::write(&cfg, r#"{"dtt": 0.005}"#).unwrap();
    assert_eq!(netflow(&["run", "--network", s(&net), "--config", s(&cfg)]).0, 2);
}

#[test]
fn runs_are_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let net = oracle(dir.path(), "bumped", "16");
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for p in [&a, &b] {
        let (code, _) = netflow(&["run", "--network", s(&net), "--t-end", "1e-3", "--dt", "1e-4", "--out", s(p)]);
        assert_eq!(code, 0);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(
        std::fs::read(dir.path().join("a.diagnostics.csv")).unwrap(),
        std::fs::read(dir.path().join("b.diagnostics.csv")).unwrap()
    );
}

#[test]
fn sweep_writes_one_trajectory_per_dt() {
    let dir = tempfile::tempdir().unwrap();
    let net = oracle(dir.path(), "bumped", "16");
    let traj = dir.path().join("sw.csv");
    let (code, out) = netflow(&[
        "run", "--network", s(&net), "--t-end", "1e-3", "--dt", "2e-4", "--sweep", "3", "--out", s(&traj),
    ]);
    assert_eq!(code, 0, "{out}");
    for i in 0..3 {
        assert!(dir.path().join(format!("sw.sweep{i}.csv")).exists());
        assert!(out.contains(&format!("[sweep {i}]")));
    }
}

#[test]
fn compare_writes_hausdorff_series() {
    let dir = tempfile::tempdir().unwrap();
    let net = oracle(dir.path(), "bumped", "16");
    let csv = dir.path().join("cmp.csv");
    let (code, out) = netflow(&["compare", "--network", s(&net), "--t-end", "1e-3", "--dt", "1e-4", "--out", s(&csv)]);
    assert_eq!(code, 0, "{out}");
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("time,hausdorff\n"));
    assert_eq!(text.lines().count(), 1 + 11);
}

#[test]
fn circle_oracle_runs_in_single_curve_mode() {
    let dir = tempfile::tempdir().unwrap();
    let net = oracle(dir.path(), "circle", "64");
    let (code, out) = netflow(&["run", "--network", s(&net), "--t-end", "0.6", "--dt", "1e-3", "--expect-horizon"]);
    assert_eq!(code, 3);
    assert!(out.contains("length_collapse(0)"), "{out}");
}
