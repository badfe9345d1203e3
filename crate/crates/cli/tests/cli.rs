use std::process::Command;

fn prlab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_prlab"))
}

fn stdout(args: &[&str]) -> (i32, String) {
    let out = prlab().args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8(out.stdout).unwrap())
}

#[test]
fn gamma_solve_prints_overlap() {
    let (code, text) = stdout(&["gamma-solve", "--alpha", "1.4"]);
    assert_eq!(code, 0);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("alpha,gamma_hat,d_hat,overlap_hat"));
    let x: f64 = lines.next().unwrap().split(',').nth(3).unwrap().parse().unwrap();
    assert!((x - 0.6439).abs() < 1e-3);
}

#[test]
fn below_weak_threshold_is_a_usage_error() {
    let (code, _) = stdout(&["gamma-solve", "--alpha", "0.4"]);
    assert_eq!(code, 1);
}

#[test]
fn bad_arguments_exit_with_one() {
    assert_eq!(stdout(&["no-such-command"]).0, 1);
    assert_eq!(stdout(&["gamma-solve"]).0, 1);
    assert_eq!(stdout(&["--help"]).0, 0);
}

#[test]
fn overlap_curve_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("o.csv");
    let (code, _) = stdout(&["overlap-curve", "--alphas", "0.8,1.6,3", "--out", path.to_str().unwrap()]);
    assert_eq!(code, 0);
    let text = std::fs::read_to_string(path).unwrap();
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn rdt_curve_writes_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.csv");
    let (code, _) = stdout(&[
        "rdt-curve",
        "--alpha",
        "1.4",
        "--level",
        "plain",
        "--xs",
        "0.2,0.6,1.0",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let csv = std::fs::read_to_string(&path).unwrap();
    assert!(csv.starts_with("alpha,c,x,variant,level,value,sqrt_value,ry,c3,gamma,quad_err,in_flat_region"));
    assert_eq!(csv.lines().count(), 4);
    let meta = std::fs::read_to_string(path.with_extension("meta")).unwrap();
    assert!(meta.contains("variant=non_squared"));
}

#[test]
fn spectral_init_and_solve() {
    let (code, text) = stdout(&["--seed", "3", "spectral-init", "--n", "60", "--alpha", "4"]);
    assert_eq!(code, 0);
    assert!(text.starts_with("n,alpha,preprocess,lambda,overlap_abs,iterations,residual"));
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("inst.txt");
    let traj = dir.path().join("traj");
    let (code, text) = stdout(&[
        "--seed",
        "3",
        "--out",
        traj.to_str().unwrap(),
        "solve",
        "--n",
        "60",
        "--alpha",
        "4",
        "--save-instance",
        inst.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert!(text.lines().nth(1).unwrap().contains("true"));
    assert!(std::fs::read_dir(&traj).unwrap().count() >= 2);
    let (code, replay) = stdout(&["--seed", "3", "solve", "--alpha", "4", "--instance", inst.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert_eq!(replay, text);
}

#[test]
fn sweep_with_config_and_trials() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"sweep": {"n": 40, "alpha_grid": [2.0, 4.0], "trials_per_alpha": 3}}"#).unwrap();
    let trials = dir.path().join("trials.csv");
    let out = prlab()
        .args([
            "--config",
            cfg.to_str().unwrap(),
            "--parallelism",
            "2",
            "sweep",
            "--trials-out",
            trials.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("alpha,successes,trials,success_rate,mean_init_overlap,mean_final_overlap,failures"));
    assert_eq!(text.lines().count(), 3);
    assert!(String::from_utf8(out.stderr).unwrap().contains("estimated_transition="));
    assert_eq!(std::fs::read_to_string(trials).unwrap().lines().count(), 7);
}

#[test]
fn bad_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, "{ not json").unwrap();
    let (code, _) = stdout(&["--config", cfg.to_str().unwrap(), "gamma-solve", "--alpha", "2"]);
    assert_eq!(code, 1);
}

#[test]
fn compare_joins_theory() {
    let (code, text) = stdout(&[
        "compare",
        "--n",
        "30",
        "--alphas",
        "3,5",
        "--trials",
        "2",
        "--solvers",
        "grad-plain",
        "--inits",
        "opt-spin,random-unit",
    ]);
    assert_eq!(code, 0);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[0].contains("overlap_hat"));
}

#[test]
fn numeric_failure_exits_with_two() {
    let (code, _) = stdout(&["gamma-solve", "--alpha", "0.5001", "--tol", "1e-10"]);
    assert_eq!(code, 2);
}
