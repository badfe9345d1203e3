//! Descending phase-retrieval solvers on the squared-magnitudes objective.

use std::io::Write;

use ndarray::{Array1, ArrayView1};
use rand::seq::index::sample;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::instance::{norm, overlap, success_check, Instance};
use crate::linalg::{matvec, matvec_t};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StepRule {
    Backtracking { armijo_c: f64, shrink: f64 },
    Fixed { step: f64 },
}

/// First step tried by the backtracking search at each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrialStep {
    /// Twice the previously accepted step.
    Grow,
    /// Barzilai-Borwein step `s.s / s.g_diff`, falling back to `Grow`.
    BarzilaiBorwein,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BarrierSign {
    /// `t0 f - ln(1 - |x|^2)`, repelling from the unit sphere.
    Standard,
    /// `t0 f + ln(1 - |x|^2)`.
    Positive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DprConfig {
    pub step_rule: StepRule,
    /// Largest trial step of the backtracking search.
    pub max_step: f64,
    pub trial_step: TrialStep,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub t0_init: f64,
    pub t0_growth: f64,
    pub outer_rounds: usize,
    pub reshuffle_fraction: f64,
    pub reshuffle_attempts: usize,
    pub barrier_sign: BarrierSign,
    pub eps_success: f64,
    /// Skip the remaining hybrid rounds once a plain phase drives the
    /// objective below this value.
    pub objective_tol: f64,
    /// Iterations over which the relative objective decrease must exceed
    /// `stall_rtol`; zero disables the check.
    pub stall_window: usize,
    pub stall_rtol: f64,
    /// Record every `stride`-th iterate (the last one is always recorded).
    pub trajectory_stride: usize,
}

impl Default for DprConfig {
    fn default() -> Self {
        Self {
            step_rule: StepRule::Backtracking {
                armijo_c: 1e-4,
                shrink: 0.5,
            },
            max_step: 1.0,
            trial_step: TrialStep::BarzilaiBorwein,
            max_iters: 5000,
            grad_tol: 1e-10,
            t0_init: 1.0,
            t0_growth: 10.0,
            outer_rounds: 5,
            reshuffle_fraction: 0.05,
            reshuffle_attempts: 10,
            barrier_sign: BarrierSign::Standard,
            eps_success: 1e-5,
            objective_tol: 1e-20,
            stall_window: 100,
            stall_rtol: 1e-10,
            trajectory_stride: 1,
        }
    }
}

impl DprConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.reshuffle_fraction > 0.0 && self.reshuffle_fraction <= 0.2) {
            return Err(invalid("reshuffle_fraction must lie in (0, 0.2]"));
        }
        if self.reshuffle_attempts > 10 {
            return Err(invalid("reshuffle_attempts must be at most 10"));
        }
        if self.trajectory_stride == 0 {
            return Err(invalid("trajectory_stride must be positive"));
        }
        match self.step_rule {
            StepRule::Backtracking { armijo_c, shrink } => {
                if !(armijo_c > 0.0 && armijo_c < 1.0 && shrink > 0.0 && shrink < 1.0) {
                    return Err(invalid("backtracking needs armijo_c and shrink in (0, 1)"));
                }
            }
            StepRule::Fixed { step } => {
                if !(step > 0.0) {
                    return Err(invalid("fixed step must be positive"));
                }
            }
        }
        Ok(())
    }
}

/// `sum_i (y_i - (A x)_i^2)^2`.
pub fn f_plain_sq(instance: &Instance, x: ArrayView1<f64>) -> f64 {
    let ax = matvec(instance.a.view(), x);
    ax.iter()
        .zip(instance.y.iter())
        .map(|(a, y)| (y - a * a).powi(2))
        .sum()
}

/// Objective and gradient `4 A^T (((A x)^2 - y) * A x)`.
pub fn f_grad_plain_sq(instance: &Instance, x: ArrayView1<f64>) -> (f64, Array1<f64>) {
    let ax = matvec(instance.a.view(), x);
    let mut f = 0.0;
    let w: Array1<f64> = ax
        .iter()
        .zip(instance.y.iter())
        .map(|(a, y)| {
            let res = a * a - y;
            f += res * res;
            4.0 * res * a
        })
        .collect();
    (f, matvec_t(instance.a.view(), w.view()))
}

pub fn grad_f_plain_sq(instance: &Instance, x: ArrayView1<f64>) -> Array1<f64> {
    f_grad_plain_sq(instance, x).1
}

fn barrier_parts(x: ArrayView1<f64>, sign: BarrierSign) -> Result<(f64, f64)> {
    let n2 = x.dot(&x);
    if n2 >= 1.0 {
        return Err(Error::BarrierDomain(n2.sqrt()));
    }
    let s = match sign {
        BarrierSign::Standard => -1.0,
        BarrierSign::Positive => 1.0,
    };
    Ok((s * (1.0 - n2).ln(), -2.0 * s / (1.0 - n2)))
}

/// Log-barrier objective; the domain is the open unit ball.
pub fn f_bar(instance: &Instance, x: ArrayView1<f64>, t0: f64, sign: BarrierSign) -> Result<f64> {
    let (b, _) = barrier_parts(x, sign)?;
    Ok(t0 * f_plain_sq(instance, x) + b)
}

pub fn f_grad_bar(instance: &Instance, x: ArrayView1<f64>, t0: f64, sign: BarrierSign) -> Result<(f64, Array1<f64>)> {
    let (b, scale) = barrier_parts(x, sign)?;
    let (f, g) = f_grad_plain_sq(instance, x);
    Ok((t0 * f + b, t0 * g + &(scale * &x)))
}

pub fn grad_f_bar(instance: &Instance, x: ArrayView1<f64>, t0: f64, sign: BarrierSign) -> Result<Array1<f64>> {
    Ok(f_grad_bar(instance, x, t0, sign)?.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    GradTol,
    MaxIters,
    BarrierBoundary,
    /// The line search found no decreasing step, or the objective stopped
    /// decreasing in relative terms over the stall window.
    Stalled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PhaseKind {
    Plain,
    Barrier,
    Rescale,
    Reshuffle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub phase: usize,
    pub kind: PhaseKind,
    pub iter: usize,
    /// Squared-magnitudes residual `f_plain`.
    pub objective: f64,
    /// Objective actually minimized in the phase (`f_bar` in barrier phases).
    pub phase_objective: f64,
    pub norm: f64,
    pub overlap_abs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub trajectory: Vec<TracePoint>,
    pub final_x: Array1<f64>,
    pub success: bool,
    pub termination: Termination,
    pub iterations: usize,
}

impl RunRecord {
    fn new(x: Array1<f64>) -> Self {
        Self {
            trajectory: Vec::new(),
            final_x: x,
            success: false,
            termination: Termination::MaxIters,
            iterations: 0,
        }
    }

    fn phase_count(&self) -> usize {
        self.trajectory.last().map(|p| p.phase + 1).unwrap_or(0)
    }

    fn absorb(&mut self, other: RunRecord) {
        let offset = self.phase_count();
        self.trajectory.extend(other.trajectory.into_iter().map(|mut p| {
            p.phase += offset;
            p
        }));
        self.final_x = other.final_x;
        self.termination = other.termination;
        self.iterations += other.iterations;
    }

    fn finish(&mut self, instance: &Instance, eps: f64) {
        let ov = overlap_abs(instance, self.final_x.view());
        self.success = success_check(self.final_x.view(), instance.x_true.view(), eps).unwrap_or(false)
            || ov >= 1.0 - 1e-6;
    }

    pub fn final_overlap(&self, instance: &Instance) -> f64 {
        overlap_abs(instance, self.final_x.view())
    }

    /// Trajectory of one phase as CSV `iter,objective,norm,overlap_abs`.
    pub fn write_phase_csv<W: Write>(&self, phase: usize, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["iter", "objective", "norm", "overlap_abs"])?;
        for p in self.trajectory.iter().filter(|p| p.phase == phase) {
            out.write_record([
                p.iter.to_string(),
                format!("{:?}", p.objective),
                format!("{:?}", p.norm),
                format!("{:?}", p.overlap_abs),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn phases(&self) -> Vec<(usize, PhaseKind)> {
        let mut out: Vec<(usize, PhaseKind)> = Vec::new();
        for p in &self.trajectory {
            if out.last().map(|l| l.0) != Some(p.phase) {
                out.push((p.phase, p.kind));
            }
        }
        out
    }
}

fn overlap_abs(instance: &Instance, x: ArrayView1<f64>) -> f64 {
    overlap(x, instance.x_true.view()).map(f64::abs).unwrap_or(0.0)
}

fn point(instance: &Instance, kind: PhaseKind, iter: usize, x: ArrayView1<f64>, phase_obj: f64) -> TracePoint {
    let objective = if kind == PhaseKind::Plain {
        phase_obj
    } else {
        f_plain_sq(instance, x)
    };
    TracePoint {
        phase: 0,
        kind,
        iter,
        objective,
        phase_objective: phase_obj,
        norm: norm(x),
        overlap_abs: overlap_abs(instance, x),
    }
}

/// Gradient descent on `obj` (returning `None` outside its domain).
fn descend<F>(instance: &Instance, x0: Array1<f64>, cfg: &DprConfig, kind: PhaseKind, obj: F) -> Result<RunRecord>
where
    F: Fn(ArrayView1<f64>) -> Option<(f64, Array1<f64>)>,
{
    let mut rec = RunRecord::new(x0.clone());
    let mut x = x0;
    let (mut f, mut g) = obj(x.view()).ok_or_else(|| Error::Numeric("start point outside the domain".into()))?;
    if !f.is_finite() {
        return Err(Error::Numeric(format!("non-finite objective {f} at the start point")));
    }
    rec.trajectory.push(point(instance, kind, 0, x.view(), f));
    let mut step = cfg.max_step;
    let mut prev: Option<(Array1<f64>, Array1<f64>)> = None;
    let mut termination = Termination::MaxIters;
    let mut it = 0;
    let mut hit_boundary = false;
    let mut history = std::collections::VecDeque::with_capacity(cfg.stall_window + 1);
    while it < cfg.max_iters {
        let gn2 = g.dot(&g);
        if gn2.sqrt() <= cfg.grad_tol * (1.0 + f) {
            termination = Termination::GradTol;
            break;
        }
        let accepted = match cfg.step_rule {
            StepRule::Fixed { step } => {
                let xn = &x - &(step * &g);
                match obj(xn.view()) {
                    Some((fnew, gnew)) if fnew.is_finite() => Some((xn, fnew, gnew)),
                    Some((fnew, _)) => {
                        return Err(Error::Numeric(format!(
                            "objective became {fnew} at iteration {it}; last finite iterate kept"
                        )))
                    }
                    None => {
                        hit_boundary = true;
                        None
                    }
                }
            }
            StepRule::Backtracking { armijo_c, shrink } => {
                step = match (cfg.trial_step, &prev) {
                    (TrialStep::BarzilaiBorwein, Some((px, pg))) => {
                        let sx = &x - px;
                        let sg = &g - pg;
                        let sy = sx.dot(&sg);
                        if sy > 0.0 {
                            sx.dot(&sx) / sy
                        } else {
                            2.0 * step
                        }
                    }
                    _ => 2.0 * step,
                }
                .min(cfg.max_step);
                let mut found = None;
                while step > 1e-40 {
                    let xn = &x - &(step * &g);
                    match obj(xn.view()) {
                        Some((fnew, gnew)) if fnew.is_finite() && fnew <= f - armijo_c * step * gn2 => {
                            found = Some((xn, fnew, gnew));
                            break;
                        }
                        None => hit_boundary = true,
                        _ => {}
                    }
                    step *= shrink;
                }
                found
            }
        };
        let Some((xn, fnew, gnew)) = accepted else {
            termination = if hit_boundary {
                Termination::BarrierBoundary
            } else {
                Termination::Stalled
            };
            break;
        };
        if cfg.trial_step == TrialStep::BarzilaiBorwein {
            prev = Some((x, g));
        }
        x = xn;
        f = fnew;
        g = gnew;
        it += 1;
        if it % cfg.trajectory_stride == 0 {
            rec.trajectory.push(point(instance, kind, it, x.view(), f));
        }
        if cfg.stall_window > 0 {
            history.push_back(f);
            if history.len() > cfg.stall_window {
                let old = history.pop_front().unwrap_or(f);
                if old - f <= cfg.stall_rtol * f.abs() {
                    termination = Termination::Stalled;
                    break;
                }
            }
        }
    }
    if rec.trajectory.last().map(|p| p.iter) != Some(it) {
        rec.trajectory.push(point(instance, kind, it, x.view(), f));
    }
    rec.final_x = x;
    rec.termination = termination;
    rec.iterations = it;
    rec.finish(instance, cfg.eps_success);
    Ok(rec)
}

/// Plain gradient descent on `f_plain`.
pub fn gradplain(instance: &Instance, x0: ArrayView1<f64>, cfg: &DprConfig) -> Result<RunRecord> {
    cfg.validate()?;
    descend(instance, x0.to_owned(), cfg, PhaseKind::Plain, |x| Some(f_grad_plain_sq(instance, x)))
}

/// Gradient descent on the barrier objective with fixed `t0`. Starting points
/// outside the open unit ball are rescaled to norm 0.99 first.
pub fn gradbar(instance: &Instance, x0: ArrayView1<f64>, t0: f64, cfg: &DprConfig) -> Result<RunRecord> {
    cfg.validate()?;
    let mut start = x0.to_owned();
    let mut prefix = None;
    let nx = norm(start.view());
    if nx >= 1.0 {
        start *= 0.99 / nx;
        let mut p = point(instance, PhaseKind::Rescale, 0, start.view(), f64::NAN);
        p.phase_objective = p.objective;
        prefix = Some(p);
    }
    let sign = cfg.barrier_sign;
    let mut rec = descend(instance, start, cfg, PhaseKind::Barrier, |x| {
        f_grad_bar(instance, x, t0, sign).ok()
    })?;
    if let Some(p) = prefix {
        for q in rec.trajectory.iter_mut() {
            q.phase += 1;
        }
        rec.trajectory.insert(0, p);
    }
    Ok(rec)
}

/// Random sign flips of `round(fraction n)` coordinates, each kept only if it
/// lowers `f_plain`. Returns the best vector and the number of accepted flips.
pub fn reshuffle(instance: &Instance, x: ArrayView1<f64>, cfg: &DprConfig, rng: &mut ChaCha20Rng) -> (Array1<f64>, usize) {
    let n = x.len();
    let k = ((cfg.reshuffle_fraction * n as f64).round() as usize).min(n);
    let mut best = x.to_owned();
    let mut fbest = f_plain_sq(instance, best.view());
    let mut accepted = 0;
    for _ in 0..cfg.reshuffle_attempts {
        let mut cand = best.clone();
        for i in sample(rng, n, k).iter() {
            cand[i] = -cand[i];
        }
        let fc = f_plain_sq(instance, cand.view());
        if fc < fbest {
            best = cand;
            fbest = fc;
            accepted += 1;
        }
    }
    (best, accepted)
}

/// Alternation `a <- reshuffle(gradplain(reshuffle(gradbar(a))))` over
/// `outer_rounds`, growing `t0` each round, followed by a plain polish.
pub fn hybrid(instance: &Instance, x0: ArrayView1<f64>, cfg: &DprConfig, rng: &mut ChaCha20Rng) -> Result<RunRecord> {
    cfg.validate()?;
    let mut rec = RunRecord::new(x0.to_owned());
    let mut a = x0.to_owned();
    let mut t0 = cfg.t0_init;
    let shuffle = |rec: &mut RunRecord, a: Array1<f64>, rng: &mut ChaCha20Rng| -> Array1<f64> {
        let (b, _) = reshuffle(instance, a.view(), cfg, rng);
        let mut p = point(instance, PhaseKind::Reshuffle, 0, b.view(), f64::NAN);
        p.phase_objective = p.objective;
        p.phase = rec.phase_count();
        rec.trajectory.push(p);
        b
    };
    for _ in 0..cfg.outer_rounds {
        let bar = gradbar(instance, a.view(), t0, cfg)?;
        a = bar.final_x.clone();
        rec.absorb(bar);
        a = shuffle(&mut rec, a, rng);
        let plain = gradplain(instance, a.view(), cfg)?;
        a = plain.final_x.clone();
        let done = f_plain_sq(instance, a.view()) <= cfg.objective_tol;
        rec.absorb(plain);
        if done {
            break;
        }
        a = shuffle(&mut rec, a, rng);
        t0 *= cfg.t0_growth;
    }
    let polish = gradplain(instance, a.view(), cfg)?;
    rec.absorb(polish);
    rec.finish(instance, cfg.eps_success);
    Ok(rec)
}
