//! Plain and lifted duality-theory estimates of the phase-retrieval objective
//! over the `(c, x)` parametric manifold, for non-squared and squared
//! magnitude objectives.

mod cubic;
mod curve;
mod lifted;
mod plain;
mod squared;

pub use cubic::{cubic_candidates, cubic_real_roots};
pub use curve::{flat_prefix, manifold_curve, CurveRow, ManifoldCurve};
pub use lifted::{f_q_lift, lifted_objective, phi_lifted, sphere_terms};
pub use plain::{f_q_plain, phi_plain};
pub use squared::{
    f_q_sq, f_q_sq_lift_log, inner_min, inner_min_dense, phi_lifted_sq, phi_plain_sq, SqExpectation,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::QuadratureSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    NonSquared,
    Squared,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Level {
    Plain,
    Lifted,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::NonSquared => "non_squared",
            Variant::Squared => "squared",
        })
    }
}

impl std::fmt::Display for Level {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Level::Plain => "plain",
            Level::Lifted => "lifted",
        })
    }
}

/// Which closed form of the plain non-squared expectation to use.
///
/// `Exact` is `1 + c - 2 E|g0| |g0 x + g1 r|`; `Printed` carries half the
/// coefficient on the Gaussian-density term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlainForm {
    Exact,
    Printed,
}

/// Linear coefficient of the depressed cubic for the inner `z` minimization.
///
/// `Stationary` uses `p = r/2 - g0^2`, which makes the candidates the exact
/// stationary points; `Literal` uses `p = r/2 - |g0|`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CubicForm {
    Stationary,
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManifoldQuery {
    pub alpha: f64,
    pub c: f64,
    pub x: f64,
    pub r: f64,
    pub variant: Variant,
    pub level: Level,
}

impl ManifoldQuery {
    pub fn new(alpha: f64, c: f64, x: f64, variant: Variant, level: Level) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::Domain(format!("c must be positive, got {c}")));
        }
        if !(x >= 0.0) || x > c.sqrt() * (1.0 + 1e-12) {
            return Err(Error::Domain(format!("x = {x} outside [0, sqrt(c)]")));
        }
        if !(alpha >= 0.0) {
            return Err(Error::Domain(format!("alpha must be nonnegative, got {alpha}")));
        }
        let x = x.min(c.sqrt());
        Ok(Self {
            alpha,
            c,
            x,
            r: (c - x * x).max(0.0).sqrt(),
            variant,
            level,
        })
    }
}

/// Inner optimizer values attaining an estimate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct InnerValues {
    pub ry: Option<f64>,
    pub c3: Option<f64>,
    pub gamma: Option<f64>,
    pub gamma_sph: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RdtEstimate {
    pub query: ManifoldQuery,
    pub value: f64,
    pub inner: InnerValues,
    pub quadrature_error: f64,
    /// False when the local refinement hit its iteration cap.
    pub converged: bool,
    /// `(disagreements, nodes)` of the cubic candidates against dense search.
    pub cubic_check: Option<(usize, usize)>,
}

/// Settings for the nested outer/inner optimizations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerSettings {
    /// Points per axis of the coarse log grid over `(c3, r_y)`.
    pub grid_points: usize,
    pub c3_range: (f64, f64),
    pub ry_range: (f64, f64),
    /// Objective tolerance of the simplex refinement.
    pub simplex_ftol: f64,
    pub simplex_max_iter: usize,
    /// Range of the inner minimization variable (`gamma`, or `r_y^2/(4 gamma)`
    /// for the squared objective).
    pub inner_range: (f64, f64),
    pub inner_points: usize,
    pub inner_tol: f64,
    /// Bracket and scan size for the plain squared maximization over `r_y`.
    pub plain_ry_range: (f64, f64),
    pub plain_points: usize,
    /// Range and table size of `rbar = r_y^2/(4 gamma)` for the squared
    /// lifted inner minimization.
    pub rbar_range: (f64, f64),
    pub rbar_points: usize,
    /// Leading grid points re-evaluated with the continuous inner search.
    pub rerank: usize,
    pub plain_form: PlainForm,
    pub cubic_form: CubicForm,
    /// Dense-search points for the inner `z` safeguard.
    pub safeguard_points: usize,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            grid_points: 40,
            c3_range: (1e-3, 1e2),
            ry_range: (1e-3, 1e2),
            simplex_ftol: 1e-9,
            simplex_max_iter: 400,
            inner_range: (1e-7, 1e4),
            inner_points: 27,
            inner_tol: 1e-9,
            plain_ry_range: (1e-4, 1e3),
            plain_points: 36,
            rbar_range: (1e-6, 1e8),
            rbar_points: 113,
            rerank: 8,
            plain_form: PlainForm::Exact,
            cubic_form: CubicForm::Stationary,
            safeguard_points: 200,
        }
    }
}

/// Evaluates one estimate.
pub fn estimate(query: &ManifoldQuery, quad: &QuadratureSpec, opt: &OptimizerSettings) -> Result<RdtEstimate> {
    match (query.variant, query.level) {
        (Variant::NonSquared, Level::Plain) => phi_plain(query.alpha, query.c, query.x, opt.plain_form, quad),
        (Variant::NonSquared, Level::Lifted) => phi_lifted(query.alpha, query.c, query.x, quad, opt),
        (Variant::Squared, Level::Plain) => phi_plain_sq(query.alpha, query.c, query.x, quad, opt),
        (Variant::Squared, Level::Lifted) => phi_lifted_sq(query.alpha, query.c, query.x, quad, opt),
    }
}
