//! Spectral initializers and the closed-form optimal-overlap theory.

use ndarray::{Array1, ArrayView1, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::instance::{norm, Instance};
use crate::linalg::{matvec, matvec_t};
use crate::rng::RngStream;
use crate::special::erfcx;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PreprocessKind {
    Identity,
    Optimal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreprocessSpec {
    pub kind: PreprocessKind,
    pub clip_low: f64,
}

impl PreprocessSpec {
    pub fn identity() -> Self {
        Self {
            kind: PreprocessKind::Identity,
            clip_low: -50.0,
        }
    }

    pub fn optimal() -> Self {
        Self {
            kind: PreprocessKind::Optimal,
            clip_low: -50.0,
        }
    }
}

/// Applies the preprocessing function componentwise.
pub fn preprocess(y: ArrayView1<f64>, spec: &PreprocessSpec) -> Result<Array1<f64>> {
    if let Some(v) = y.iter().find(|v| !(**v >= 0.0)) {
        return Err(invalid(format!("measurements must be nonnegative, got {v}")));
    }
    Ok(match spec.kind {
        PreprocessKind::Identity => y.to_owned(),
        PreprocessKind::Optimal => y.mapv(|v| {
            if v == 0.0 {
                spec.clip_low
            } else {
                (1.0 - 1.0 / v).max(spec.clip_low)
            }
        }),
    })
}

/// `A^T diag(tau) A v` without forming the `n x n` operator.
pub fn spectral_apply(a: ArrayView2<f64>, tau: ArrayView1<f64>, v: ArrayView1<f64>) -> Result<Array1<f64>> {
    let (m, n) = a.dim();
    if tau.len() != m || v.len() != n {
        return Err(invalid(format!(
            "shape mismatch: A is {m}x{n}, tau {}, v {}",
            tau.len(),
            v.len()
        )));
    }
    Ok(apply(a, tau, v))
}

fn apply(a: ArrayView2<f64>, tau: ArrayView1<f64>, v: ArrayView1<f64>) -> Array1<f64> {
    let w = matvec(a, v) * tau;
    matvec_t(a, w.view())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EigenMethod {
    /// Plain power iteration on the shifted operator `D + σI`.
    ShiftedPower,
    /// Power iteration with a Chebyshev filter damping `[-σ, b]`, where `b`
    /// trails the current Rayleigh quotient.
    ChebyshevPower,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenSettings {
    pub tol: f64,
    pub max_iter: usize,
    pub method: EigenMethod,
}

impl Default for EigenSettings {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 5000,
            method: EigenMethod::ChebyshevPower,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Eigenpair {
    pub lambda: f64,
    pub v: Array1<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub shift: f64,
}

fn random_unit(n: usize, stream: RngStream) -> Array1<f64> {
    let mut rng = stream.rng();
    let mut v = Array1::from_shape_simple_fn(n, || rng.sample::<f64, _>(StandardNormal));
    let s = norm(v.view());
    v /= s;
    v
}

/// Upper estimate of the largest eigenvalue of `A^T A`.
pub fn gram_bound(a: ArrayView2<f64>, stream: RngStream) -> f64 {
    let n = a.ncols();
    let mut v = random_unit(n, stream);
    let mut lam = 0.0;
    for _ in 0..100 {
        let w = matvec_t(a, matvec(a, v.view()).view());
        lam = v.dot(&w);
        let s = norm(w.view());
        if s == 0.0 {
            return 0.0;
        }
        v = w / s;
    }
    1.05 * lam
}

/// Algebraically largest eigenpair of `D = A^T diag(tau) A`.
pub fn top_eigenpair(
    a: ArrayView2<f64>,
    tau: ArrayView1<f64>,
    settings: &EigenSettings,
    stream: RngStream,
) -> Result<Eigenpair> {
    let (m, n) = a.dim();
    if tau.len() != m {
        return Err(invalid("tau length must equal the number of rows of A"));
    }
    if !(settings.tol > 0.0) {
        return Err(invalid("eigensolver tolerance must be positive"));
    }
    let min_tau = tau.iter().copied().fold(f64::INFINITY, f64::min);
    let s = gram_bound(a, stream.child(1));
    let shift = (-min_tau).max(0.0) * s;
    let mut v = random_unit(n, stream.child(0));
    let mut dv = apply(a, tau, v.view());
    let mut lambda = v.dot(&dv);
    let mut residual = norm((&dv - &(lambda * &v)).view());
    let mut it = 0;
    const BLOCK: usize = 20;
    while residual > settings.tol && it < settings.max_iter {
        match settings.method {
            EigenMethod::ShiftedPower => {
                let w = &dv + &(shift * &v);
                let s = norm(w.view());
                if s == 0.0 {
                    break;
                }
                v = w / s;
                it += 1;
            }
            EigenMethod::ChebyshevPower => {
                let lo = -shift.max(0.0) - 1e-12 * (1.0 + shift);
                let hi = lambda - 0.2 * lambda.abs().max(1e-3 * (lambda - lo));
                if hi <= lo {
                    let w = &dv + &(shift * &v);
                    let s = norm(w.view());
                    v = w / s;
                    it += 1;
                } else {
                    let c = 0.5 * (hi + lo);
                    let e = 0.5 * (hi - lo);
                    let steps = BLOCK.min(settings.max_iter - it);
                    let mut prev = v.clone();
                    let mut cur = (&dv - &(c * &v)) / e;
                    for _ in 1..steps {
                        let lc = (apply(a, tau, cur.view()) - &(c * &cur)) / e;
                        let next = 2.0 * lc - &prev;
                        prev = cur;
                        cur = next;
                    }
                    let s = norm(cur.view());
                    if !(s > 0.0 && s.is_finite()) {
                        return Err(Error::Numeric("Chebyshev filter broke down".into()));
                    }
                    v = cur / s;
                    it += steps;
                }
            }
        }
        dv = apply(a, tau, v.view());
        lambda = v.dot(&dv);
        residual = norm((&dv - &(lambda * &v)).view());
    }
    if residual > settings.tol {
        return Err(Error::Convergence {
            iterations: it,
            residual,
            best: v.to_vec(),
        });
    }
    Ok(Eigenpair {
        lambda,
        v,
        iterations: it,
        residual,
        shift,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralResult {
    pub x_spec: Array1<f64>,
    pub lambda_spec: f64,
    pub overlap_abs: f64,
    pub iterations: usize,
    pub residual: f64,
}

/// Spectral initializer for an instance; the sign is aligned with `x_true`
/// for diagnostics only.
pub fn optspin_init(
    instance: &Instance,
    spec: &PreprocessSpec,
    settings: &EigenSettings,
    stream: RngStream,
) -> Result<SpectralResult> {
    let tau = preprocess(instance.y.view(), spec)?;
    let pair = top_eigenpair(instance.a.view(), tau.view(), settings, stream)?;
    let mut x = pair.v;
    let c = x.dot(&instance.x_true);
    if c < 0.0 {
        x.mapv_inplace(|v| -v);
    }
    Ok(SpectralResult {
        overlap_abs: c.abs().min(1.0),
        x_spec: x,
        lambda_spec: pair.lambda,
        iterations: pair.iterations,
        residual: pair.residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptSpinTheoryPoint {
    pub alpha: f64,
    pub gamma_hat: f64,
    pub d_hat: f64,
    pub overlap_hat: f64,
}

/// Left-hand side of the transcendental equation whose root is `gamma_hat`.
pub fn gamma_lhs(gamma: f64) -> f64 {
    let d = gamma - 1.0;
    let z = 1.0 / (2.0 * d).sqrt();
    let bracket = 0.5 * gamma * (2.0 * d * std::f64::consts::PI).sqrt() * erfcx(z) - d;
    gamma / (d * d * d) * bracket
}

pub fn solve_gamma_hat(alpha: f64, tol: f64) -> Result<OptSpinTheoryPoint> {
    if !(alpha > 0.5) {
        return Err(Error::Domain(format!(
            "alpha = {alpha} is below the weak threshold 1/2"
        )));
    }
    if !(tol > 0.0) {
        return Err(invalid("tolerance must be positive"));
    }
    let target = 1.0 / alpha;
    let f = |g: f64| gamma_lhs(g) - target;
    let mut lo = 1.0 + 1e-6;
    if !(f(lo) > 0.0) {
        return Err(Error::Numeric(format!("no bracket at the left end for alpha {alpha}")));
    }
    let mut width = 1e-6;
    let mut hi = lo;
    let mut found = false;
    for _ in 0..200 {
        width *= 2.0;
        hi = 1.0 + width;
        if f(hi) < 0.0 {
            found = true;
            break;
        }
        lo = hi;
    }
    if !found {
        return Err(Error::Numeric(format!("no bracket found for alpha {alpha}")));
    }
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..400 {
        mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 || hi - lo <= 4.0 * f64::EPSILON * mid {
            break;
        }
        if fm > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let residual = f(mid).abs();
    if residual > tol {
        return Err(Error::Numeric(format!(
            "gamma residual {residual:e} exceeds tolerance {tol:e} at alpha {alpha}"
        )));
    }
    Ok(OptSpinTheoryPoint {
        alpha,
        gamma_hat: mid,
        d_hat: mid - 1.0,
        overlap_hat: (1.0 - 1.0 / mid).sqrt(),
    })
}

pub fn overlap_curve(alpha_grid: &[f64], tol: f64) -> Result<Vec<OptSpinTheoryPoint>> {
    if alpha_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("alpha grid must be strictly increasing"));
    }
    alpha_grid
        .iter()
        .map(|&a| {
            solve_gamma_hat(a, tol).map_err(|e| match e {
                Error::Domain(msg) => Error::Domain(format!("alpha {a}: {msg}")),
                Error::Numeric(msg) => Error::Numeric(format!("alpha {a}: {msg}")),
                other => other,
            })
        })
        .collect()
}
