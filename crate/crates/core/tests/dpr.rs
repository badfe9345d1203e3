use ndarray::Array1;
use prlab_core::dpr::{
    f_bar, f_grad_bar, f_plain_sq, gradbar, gradplain, grad_f_bar, grad_f_plain_sq, hybrid, reshuffle, BarrierSign,
    DprConfig, PhaseKind, StepRule,
};
use prlab_core::harness::{initial_point, run_trial, Initializer, Solver, SweepConfig};
use prlab_core::spectral::EigenSettings;
use prlab_core::{generate_instance, success_check, Instance, RngStream};
use rand::Rng;
use rand_distr::StandardNormal;

fn inst(n: usize, alpha: f64, seed: u64) -> Instance {
    generate_instance(n, alpha, RngStream::new(seed, 0)).unwrap()
}

fn random_point(n: usize, radius: f64, rng: &mut impl Rng) -> Array1<f64> {
    let v = Array1::from_shape_simple_fn(n, || rng.sample::<f64, _>(StandardNormal));
    let r = radius * rng.random::<f64>().max(0.05);
    let s = v.dot(&v).sqrt();
    v * (r / s)
}

fn fd_check(f: impl Fn(&Array1<f64>) -> f64, g: &Array1<f64>, x: &Array1<f64>) -> f64 {
    let h = 1e-6 * (1.0 + x.dot(x).sqrt());
    let mut fd = Array1::zeros(x.len());
    for i in 0..x.len() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        fd[i] = (f(&xp) - f(&xm)) / (2.0 * h);
    }
    let diff = &fd - g;
    diff.dot(&diff).sqrt() / g.dot(g).sqrt().max(1e-300)
}

#[test]
fn gradients_match_finite_differences_at_100_points() {
    let i = inst(12, 2.5, 5);
    let mut rng = RngStream::new(5, 9).rng();
    for k in 0..100 {
        let x = random_point(12, 0.95, &mut rng);
        let g = grad_f_plain_sq(&i, x.view());
        let e = fd_check(|z| f_plain_sq(&i, z.view()), &g, &x);
        assert!(e <= 1e-5, "plain point {k}: {e}");
        for sign in [BarrierSign::Standard, BarrierSign::Positive] {
            let t0 = 0.7;
            let g = grad_f_bar(&i, x.view(), t0, sign).unwrap();
            let e = fd_check(|z| f_bar(&i, z.view(), t0, sign).unwrap(), &g, &x);
            assert!(e <= 1e-5, "barrier point {k}: {e}");
        }
    }
}

#[test]
fn objective_even_and_gradient_odd() {
    let i = inst(15, 2.0, 1);
    let x = Array1::from_shape_fn(15, |k| (k as f64).cos() * 0.2);
    let nx = -&x;
    assert_eq!(f_plain_sq(&i, x.view()), f_plain_sq(&i, nx.view()));
    let g = grad_f_plain_sq(&i, x.view());
    let gn = grad_f_plain_sq(&i, nx.view());
    for k in 0..15 {
        assert_eq!(g[k], -gn[k]);
    }
    let (fb, gb) = f_grad_bar(&i, x.view(), 2.0, BarrierSign::Standard).unwrap();
    assert_eq!(fb, f_bar(&i, x.view(), 2.0, BarrierSign::Standard).unwrap());
    assert_eq!(gb.len(), 15);
}

#[test]
fn gradplain_from_near_truth_succeeds() {
    for seed in 0..5 {
        let i = inst(60, 3.0, seed);
        let x0 = &i.x_true * 1.0001;
        let rec = gradplain(&i, x0.view(), &DprConfig::default()).unwrap();
        assert!(success_check(rec.final_x.view(), i.x_true.view(), 1e-5).unwrap());
        assert!(rec.success);
        let obj: Vec<f64> = rec.trajectory.iter().map(|p| p.objective).collect();
        assert!(obj.windows(2).all(|w| w[1] <= w[0]));
        assert!(obj.iter().all(|&v| v >= 0.0));
    }
}

#[test]
fn fixed_step_rule_runs() {
    let i = inst(30, 3.0, 2);
    let x0 = &i.x_true * 1.001;
    let mut cfg = DprConfig::default();
    cfg.step_rule = StepRule::Fixed { step: 1e-4 };
    let rec = gradplain(&i, x0.view(), &cfg).unwrap();
    assert!(rec.success);
}

#[test]
fn gradbar_stays_inside_ball_and_records_rescale() {
    let i = inst(40, 2.5, 3);
    let x0 = &i.x_true * 1.3;
    let rec = gradbar(&i, x0.view(), 1.0, &DprConfig::default()).unwrap();
    assert_eq!(rec.trajectory[0].kind, PhaseKind::Rescale);
    assert!((rec.trajectory[0].norm - 0.99).abs() < 1e-12);
    for p in &rec.trajectory {
        assert!(p.norm < 1.0);
    }
    let f: Vec<f64> = rec
        .trajectory
        .iter()
        .filter(|p| p.kind == PhaseKind::Barrier)
        .map(|p| p.phase_objective)
        .collect();
    assert!(f.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn gradbar_large_t0_improves_overlap_majority() {
    let mut better = 0;
    for seed in 0..20 {
        let i = inst(100, 3.0, 40 + seed);
        let mut rng = RngStream::new(seed, 5).rng();
        let noise = random_point(100, 1.0, &mut rng);
        let noise = &noise / noise.dot(&noise).sqrt();
        let dir = &i.x_true * 0.8 + &(noise * 0.6);
        let x0 = &dir * (0.5 / dir.dot(&dir).sqrt());
        let before = prlab_core::overlap(x0.view(), i.x_true.view()).unwrap().abs();
        let rec = gradbar(&i, x0.view(), 1e3, &DprConfig::default()).unwrap();
        if rec.final_overlap(&i) >= before {
            better += 1;
        }
    }
    assert!(better > 10, "{better}");
}

#[test]
fn hybrid_from_scaled_truth_succeeds_every_seed() {
    for seed in 0..5 {
        let i = inst(80, 2.0, 70 + seed);
        let x0 = &i.x_true * 0.99;
        let mut rng = RngStream::new(seed, 1).rng();
        let rec = hybrid(&i, x0.view(), &DprConfig::default(), &mut rng).unwrap();
        assert!(rec.success, "seed {seed}");
        let last = rec.phases().last().copied().unwrap();
        assert_eq!(last.1, PhaseKind::Plain);
        for (ph, kind) in rec.phases() {
            let pts: Vec<f64> = rec.trajectory.iter().filter(|p| p.phase == ph).map(|p| p.phase_objective).collect();
            if matches!(kind, PhaseKind::Plain | PhaseKind::Barrier) {
                assert!(pts.windows(2).all(|w| w[1] <= w[0]), "phase {ph}");
            }
            if kind == PhaseKind::Barrier {
                assert!(rec.trajectory.iter().filter(|p| p.phase == ph).all(|p| p.norm < 1.0));
            }
        }
    }
}

#[test]
fn runs_are_deterministic() {
    let i = inst(50, 1.6, 11);
    let x0 = Array1::from_shape_fn(50, |k| ((k * 3) as f64).sin() * 0.1);
    let cfg = DprConfig::default();
    let a = hybrid(&i, x0.view(), &cfg, &mut RngStream::new(3, 3).rng()).unwrap();
    let b = hybrid(&i, x0.view(), &cfg, &mut RngStream::new(3, 3).rng()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn reshuffle_never_increases_objective() {
    let i = inst(300, 1.5, 8);
    let cfg = DprConfig::default();
    let mut rng = RngStream::new(8, 1).rng();
    for _ in 0..10 {
        let x = random_point(300, 1.0, &mut rng);
        let (y, _) = reshuffle(&i, x.view(), &cfg, &mut rng);
        assert!(f_plain_sq(&i, y.view()) <= f_plain_sq(&i, x.view()));
        let changed = x.iter().zip(y.iter()).filter(|(a, b)| a != b).count();
        assert!(changed == 0 || changed >= 1);
    }
}

#[test]
fn trajectory_csv_per_phase() {
    let i = inst(30, 3.0, 4);
    let x0 = &i.x_true * 0.5;
    let rec = hybrid(&i, x0.view(), &DprConfig::default(), &mut RngStream::new(1, 1).rng()).unwrap();
    let mut buf = Vec::new();
    rec.write_phase_csv(0, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("iter,objective,norm,overlap_abs"));
    assert!(lines.count() >= 1);
}

fn rate(alpha: f64, solver: Solver, trials: u32) -> f64 {
    let cfg = SweepConfig::default();
    let ok = (0..trials)
        .filter(|&t| run_trial(300, alpha, solver, Initializer::OptSpin, &cfg, RngStream::for_trial(1, 0, t)).success)
        .count();
    ok as f64 / trials as f64
}

#[test]
fn gradplain_optspin_at_1_8_succeeds_half_the_time() {
    let r = rate(1.8, Solver::GradPlain, 20);
    assert!(r >= 0.5, "{r}");
}

#[test]
fn hybrid_optspin_at_1_8_succeeds() {
    let r = rate(1.8, Solver::Hybrid, 20);
    assert!(r >= 0.8, "{r}");
}

#[test]
fn hybrid_optspin_at_1_0_fails() {
    let r = rate(1.0, Solver::Hybrid, 20);
    assert!(r <= 0.2, "{r}");
}

#[test]
fn initial_point_is_unit() {
    let i = inst(100, 2.0, 1);
    for init in [Initializer::OptSpin, Initializer::IdentitySpectral, Initializer::RandomUnit] {
        let (x, _) = initial_point(&i, init, &EigenSettings::default(), RngStream::new(1, 2)).unwrap();
        assert!((x.dot(&x) - 1.0).abs() < 1e-12);
    }
}
