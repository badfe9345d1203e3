use prlab_core::harness::{
    aggregate, emit_theory_tables, read_trials_csv, sweep_phase_transition, sweep_trials, write_trials_csv,
    Initializer, LabConfig, Solver, SweepConfig, TheoryConfig,
};
use prlab_core::rdt::{Level, Variant};

fn small() -> SweepConfig {
    SweepConfig {
        n: 40,
        alpha_grid: vec![1.5, 2.5, 3.5, 5.0],
        trials_per_alpha: 4,
        base_seed: 17,
        ..SweepConfig::default()
    }
}

#[test]
fn parallel_and_serial_sweeps_agree() {
    let serial = small();
    let parallel = SweepConfig {
        parallelism: 3,
        ..small()
    };
    let a = sweep_trials(&serial).unwrap();
    let b = sweep_trials(&parallel).unwrap();
    let strip = |v: &[prlab_core::harness::TrialRow]| {
        v.iter()
            .map(|t| (t.alpha_index, t.trial, t.success, t.init_overlap.to_bits(), t.final_overlap.to_bits(), t.iters))
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(&a), strip(&b));
    assert_eq!(aggregate(&serial.alpha_grid, &a), aggregate(&serial.alpha_grid, &b));
}

#[test]
fn aggregation_reproduces_from_persisted_rows() {
    let cfg = small();
    let trials = sweep_trials(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trials.csv");
    write_trials_csv(&trials, std::fs::File::create(&path).unwrap()).unwrap();
    let back = read_trials_csv(std::fs::File::open(&path).unwrap()).unwrap();
    assert_eq!(back.len(), trials.len());
    let r = aggregate(&cfg.alpha_grid, &trials);
    assert_eq!(r, aggregate(&cfg.alpha_grid, &back));
    for row in &r.rows {
        assert_eq!(row.success_rate, row.successes as f64 / row.trials as f64);
    }
    assert!(r.rows.windows(2).all(|w| w[0].alpha < w[1].alpha));
    if let Some(t) = r.estimated_transition {
        assert!(t > 1.5 && t < 5.0);
    }
}

#[test]
fn adding_grid_points_keeps_existing_trials() {
    let cfg = small();
    let mut wider = small();
    wider.alpha_grid.push(6.0);
    let a = sweep_trials(&cfg).unwrap();
    let b = sweep_trials(&wider).unwrap();
    assert_eq!(a[..], b[..a.len()].iter().cloned().map(|mut t| {
        t.wall_time = a.iter().find(|u| u.alpha_index == t.alpha_index && u.trial == t.trial).unwrap().wall_time;
        t
    }).collect::<Vec<_>>()[..]);
}

#[test]
fn single_trial_rates_are_binary() {
    let cfg = SweepConfig {
        trials_per_alpha: 1,
        solver: Solver::GradPlain,
        initializer: Initializer::RandomUnit,
        ..small()
    };
    let r = sweep_phase_transition(&cfg).unwrap();
    for row in &r.rows {
        assert!(row.success_rate == 0.0 || row.success_rate == 1.0);
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let mut c = small();
    c.trials_per_alpha = 0;
    assert!(sweep_trials(&c).is_err());
    let mut c = small();
    c.alpha_grid = vec![2.0, 2.0];
    assert!(sweep_trials(&c).is_err());
}

#[test]
fn json_config_round_trip() {
    let cfg = LabConfig::default();
    let text = serde_json::to_string(&cfg).unwrap();
    assert_eq!(LabConfig::from_json_str(&text).unwrap(), cfg);
    let partial = LabConfig::from_json_str(r#"{"theory": {"alpha_grid": [2.0]}, "sweep": {"solver": "GradPlain"}}"#).unwrap();
    assert_eq!(partial.theory.alpha_grid, vec![2.0]);
    assert_eq!(partial.sweep.solver, Solver::GradPlain);
}

#[test]
fn theory_tables_are_written() {
    let cfg = TheoryConfig {
        alpha_grid: vec![1.4, 1.6],
        x_grid: vec![0.2, 0.5, 0.8],
        curves: vec![(Variant::NonSquared, Level::Plain), (Variant::Squared, Level::Plain)],
        ..TheoryConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let t = emit_theory_tables(&cfg, Some(dir.path())).unwrap();
    assert_eq!(t.overlap.len(), 2);
    assert_eq!(t.curves.len(), 4);
    assert_eq!(t.superposition.len(), 4);
    assert!(t.curves.iter().all(|c| c.rows.len() == 4));
    let overlap = std::fs::read_to_string(dir.path().join("overlap_curve.csv")).unwrap();
    let mut lines = overlap.lines();
    assert_eq!(lines.next(), Some("alpha,gamma_hat,d_hat,overlap_hat"));
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    let x: f64 = first[3].parse().unwrap();
    assert!((x - 0.6439).abs() < 1e-3);
    let sup = std::fs::read_to_string(dir.path().join("superposition.csv")).unwrap();
    assert!(sup.contains("flat region"));
    let meta = t.files.iter().find(|p| p.extension().is_some_and(|e| e == "meta")).unwrap();
    let meta = std::fs::read_to_string(meta).unwrap();
    assert!(meta.contains("quadrature.nodes_1d=200"));
    assert!(meta.contains("optimizer.grid_points=40"));
}
