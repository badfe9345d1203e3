use super::{InnerValues, Level, ManifoldQuery, OptimizerSettings, RdtEstimate, Variant};
use crate::error::{Error, Result};
use crate::optimize::{log_space, nelder_mead, scan_then_golden};
use crate::quadrature::QuadratureSpec;
use crate::special::log_erfc;

/// Lifted expectation `E exp(-c3 gx (|g| - |g x + u r|)^2)` with `g, u` iid
/// standard normal, evaluated as a 1-D integral of two erfc-weighted terms.
/// Each term is combined in log space before exponentiation.
pub fn f_q_lift(c: f64, x: f64, c3: f64, gamma_x: f64, quad: &QuadratureSpec) -> Result<f64> {
    if !(c3 > 0.0) || !(gamma_x >= 0.0) {
        return Err(Error::Domain(format!("need c3 > 0 and gamma_x >= 0, got {c3}, {gamma_x}")));
    }
    let r2 = c - x * x;
    if r2 < -1e-12 || x < 0.0 {
        return Err(Error::Domain(format!("x = {x} outside [0, sqrt(c)] for c = {c}")));
    }
    let r = r2.max(0.0).sqrt();
    let k = c3 * gamma_x;
    if r < 1e-12 {
        return Ok((1.0 + 2.0 * k * (1.0 - x).powi(2)).powf(-0.5));
    }
    let cc = 1.0 + 2.0 * k * r * r;
    let log_norm = -(2.0 * cc.sqrt()).ln();
    let s2c = (2.0 * cc).sqrt();
    let term = |g: f64| -> f64 {
        let ag = g.abs();
        let b = -g * x / r;
        let a1 = -2.0 * k * r * ag + 2.0 * k * g * r * x;
        let a2 = 2.0 * k * r * ag + 2.0 * k * g * r * x;
        let d1 = -k * (g * g * (1.0 + x * x) - 2.0 * g * ag * x);
        let d2 = -k * (g * g * (1.0 + x * x) + 2.0 * g * ag * x);
        let l1 = d1 + a1 * a1 / (2.0 * cc) + log_norm + log_erfc((a1 + cc * b) / s2c);
        let l2 = d2 + a2 * a2 / (2.0 * cc) + log_norm + log_erfc(-(a2 + cc * b) / s2c);
        l1.exp() + l2.exp()
    };
    let v = quad.integrate_half(|g| term(g) + term(-g));
    if !v.is_finite() || v <= 0.0 {
        return Err(Error::Numeric(format!(
            "lifted expectation is {v} at c={c}, x={x}, c3={c3}, gamma_x={gamma_x}"
        )));
    }
    Ok(v)
}

/// Closed-form sphere part of the lifted objective and the attaining
/// `gamma_sph`: returns `(terms, gamma_sph)`.
pub fn sphere_terms(c3: f64, r: f64, ry: f64) -> (f64, f64) {
    let a = c3 * r * ry;
    let s = (a * a + 4.0).sqrt();
    let gs = 0.25 * (a + s);
    // 1 - a / (2 gs) = 4 / (s + a)^2 > 0 for every a >= 0.
    let log_arg = 4f64.ln() - 2.0 * (s + a).ln();
    (0.5 * c3 * r * r * ry * ry - r * ry * gs + log_arg / (2.0 * c3), gs)
}

fn gamma_x_of(ry: f64, gamma: f64) -> f64 {
    if gamma == 0.0 {
        return 1.0;
    }
    let rb = ry * ry / (4.0 * gamma);
    rb / (1.0 + rb)
}

/// Lifted objective at `(c3, r_y, gamma)`; `gamma = 0` is the limit `gamma -> 0+`.
pub fn lifted_objective(
    alpha: f64,
    c: f64,
    x: f64,
    c3: f64,
    ry: f64,
    gamma: f64,
    quad: &QuadratureSpec,
) -> Result<f64> {
    let r = (c - x * x).max(0.0).sqrt();
    let (s, _) = sphere_terms(c3, r, ry);
    let f = f_q_lift(c, x, c3, gamma_x_of(ry, gamma), quad)?;
    Ok(s + gamma - alpha / c3 * f.ln())
}

/// `min_gamma` of the objective: returns `(value, gamma)`.
fn inner_min(
    alpha: f64,
    c: f64,
    x: f64,
    c3: f64,
    ry: f64,
    quad: &QuadratureSpec,
    opt: &OptimizerSettings,
) -> (f64, f64) {
    let obj = |t: f64| lifted_objective(alpha, c, x, c3, ry, t.exp(), quad).unwrap_or(f64::INFINITY);
    let (lo, hi) = (opt.inner_range.0.ln(), opt.inner_range.1.ln());
    let (t, v) = scan_then_golden(obj, lo, hi, opt.inner_points, opt.inner_tol);
    let limit = lifted_objective(alpha, c, x, c3, ry, 0.0, quad).unwrap_or(f64::INFINITY);
    if limit < v {
        (limit, 0.0)
    } else {
        (v, t.exp())
    }
}

/// Lifted estimate: max over `(c3, r_y)` of the min over `gamma`.
pub fn phi_lifted(
    alpha: f64,
    c: f64,
    x: f64,
    quad: &QuadratureSpec,
    opt: &OptimizerSettings,
) -> Result<RdtEstimate> {
    let query = ManifoldQuery::new(alpha, c, x, Variant::NonSquared, Level::Lifted)?;
    let c3s = log_space(opt.c3_range.0, opt.c3_range.1, opt.grid_points);
    let rys = log_space(opt.ry_range.0, opt.ry_range.1, opt.grid_points);
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    for &c3 in &c3s {
        for &ry in &rys {
            let (v, _) = inner_min(alpha, c, x, c3, ry, quad, opt);
            if v.is_finite() && v > best.0 {
                best = (v, c3, ry);
            }
        }
    }
    if !best.0.is_finite() {
        return Err(Error::Numeric(format!("no finite lifted objective at x = {x}")));
    }
    let bounds = [
        (opt.c3_range.0.ln() - 7.0, opt.c3_range.1.ln() + 7.0),
        (opt.ry_range.0.ln() - 7.0, opt.ry_range.1.ln() + 7.0),
    ];
    let neg = |p: &[f64]| {
        if p.iter().zip(&bounds).any(|(v, b)| *v < b.0 || *v > b.1) {
            return f64::INFINITY;
        }
        let v = inner_min(alpha, c, x, p[0].exp(), p[1].exp(), quad, opt).0;
        if v.is_finite() {
            -v
        } else {
            f64::INFINITY
        }
    };
    let step = (opt.c3_range.1 / opt.c3_range.0).ln() / (opt.grid_points.max(2) - 1) as f64;
    let nm = nelder_mead(
        neg,
        &[best.1.ln(), best.2.ln()],
        step,
        opt.simplex_ftol,
        1e-7,
        opt.simplex_max_iter,
    );
    let (value, c3, ry) = if -nm.fx >= best.0 {
        (-nm.fx, nm.x[0].exp(), nm.x[1].exp())
    } else {
        (best.0, best.1, best.2)
    };
    let (check, gamma) = inner_min(alpha, c, x, c3, ry, quad, opt);
    let coarse = lifted_objective(alpha, c, x, c3, ry, gamma, &quad.halved())?;
    let r = query.r;
    Ok(RdtEstimate {
        query,
        value: check.max(value),
        inner: InnerValues {
            ry: Some(ry),
            c3: Some(c3),
            gamma: Some(gamma),
            gamma_sph: Some(sphere_terms(c3, r, ry).1),
        },
        quadrature_error: (coarse - check).abs(),
        converged: nm.converged,
        cubic_check: None,
    })
}
