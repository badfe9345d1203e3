use super::cubic::cubic_candidates;
use super::lifted::sphere_terms;
use super::{CubicForm, InnerValues, Level, ManifoldQuery, OptimizerSettings, RdtEstimate, Variant};
use crate::error::{Error, Result};
use crate::optimize::{golden_section, lin_space, log_space, nelder_mead, scan_then_golden};
use crate::quadrature::{QuadratureSpec, Rule};
use crate::special::norm_pdf;

fn inner_obj(a: f64, b: f64, rho: f64, z: f64) -> f64 {
    (a - z * z).powi(2) + rho * (b - z).powi(2)
}

/// `min_{z >= 0} (a - z^2)^2 + rho (b - z)^2` over the cubic candidate set.
/// `a` is `g0^2`, `b` is `|g0 x + g1 r|`.
pub fn inner_min(a: f64, b: f64, rho: f64, form: CubicForm) -> f64 {
    if rho == f64::INFINITY {
        return (a - b * b).powi(2);
    }
    let p = match form {
        CubicForm::Stationary => 0.5 * rho - a,
        CubicForm::Literal => 0.5 * rho - a.sqrt(),
    };
    let q = -0.5 * rho * b;
    cubic_candidates(p, q)
        .into_iter()
        .map(|z| inner_obj(a, b, rho, z))
        .fold(f64::INFINITY, f64::min)
}

/// The same minimum by dense search on `[0, z_max]` with golden refinement.
pub fn inner_min_dense(a: f64, b: f64, rho: f64, points: usize) -> f64 {
    if rho == f64::INFINITY {
        return (a - b * b).powi(2);
    }
    let g0 = a.sqrt();
    let z_max = (2.0 * (g0 + (rho * b).sqrt())).max(b).max(g0) * 1.05 + 1e-12;
    let grid = lin_space(0.0, z_max, points.max(3));
    let vals: Vec<f64> = grid.iter().map(|&z| inner_obj(a, b, rho, z)).collect();
    let i = crate::optimize::argmin(&vals);
    let lo = grid[i.saturating_sub(1)];
    let hi = grid[(i + 1).min(grid.len() - 1)];
    let (_, v) = golden_section(|z| inner_obj(a, b, rho, z), lo, hi, 1e-12 * (1.0 + z_max));
    v.min(vals[i])
}

/// Folded 2-D Gaussian node set over `(g0, g1)`: `g0 >= 0` with the symmetric
/// half folded in, and `g1` split at the kink of `|g0 x + g1 r|`.
struct Nodes {
    a: Vec<f64>,
    b: Vec<f64>,
    w: Vec<f64>,
}

impl Nodes {
    fn new(x: f64, r: f64, quad: &QuadratureSpec) -> Nodes {
        let t = quad.truncation;
        let n = quad.nodes_2d;
        let outer = Rule::legendre_on(n, 0.0, t, true);
        let (mut a, mut b, mut w) = (Vec::new(), Vec::new(), Vec::new());
        for (&g0, &w0) in outer.nodes.iter().zip(&outer.weights) {
            if r < 1e-12 {
                a.push(g0 * g0);
                b.push(g0 * x);
                w.push(2.0 * w0);
                continue;
            }
            let kink = -g0 * x / r;
            let panels: Vec<(f64, f64)> = if kink <= -t {
                vec![(-t, t)]
            } else {
                vec![(-t, kink), (kink, t)]
            };
            for (lo, hi) in panels {
                let inner = Rule::legendre_on(n, lo, hi, false);
                for (&g1, &w1) in inner.nodes.iter().zip(&inner.weights) {
                    a.push(g0 * g0);
                    b.push((g0 * x + g1 * r).abs());
                    w.push(2.0 * w0 * w1 * norm_pdf(g1));
                }
            }
        }
        Nodes { a, b, w }
    }

    fn len(&self) -> usize {
        self.w.len()
    }

    fn h(&self, rho: f64, form: CubicForm) -> Vec<f64> {
        (0..self.len())
            .map(|k| inner_min(self.a[k], self.b[k], rho, form))
            .collect()
    }

    /// Candidate values, safeguarded values and the disagreement count.
    fn h_checked(&self, rho: f64, form: CubicForm, points: usize) -> (Vec<f64>, usize) {
        let mut bad = 0;
        let h = (0..self.len())
            .map(|k| {
                let cand = inner_min(self.a[k], self.b[k], rho, form);
                let dense = inner_min_dense(self.a[k], self.b[k], rho, points);
                if cand - dense > 1e-6 {
                    bad += 1;
                }
                cand.min(dense)
            })
            .collect();
        (h, bad)
    }

    fn mean(&self, h: &[f64]) -> f64 {
        h.iter().zip(&self.w).map(|(h, w)| h * w).sum()
    }

    /// `ln sum_k w_k exp(-c3 h_k)`.
    fn log_mean_exp(&self, h: &[f64], c3: f64) -> f64 {
        let hmin = h.iter().copied().fold(f64::INFINITY, f64::min);
        let s: f64 = h
            .iter()
            .zip(&self.w)
            .map(|(h, w)| w * (-c3 * (h - hmin)).exp())
            .sum();
        s.ln() - c3 * hmin
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SqExpectation {
    pub value: f64,
    pub disagreements: usize,
    pub nodes: usize,
}

fn check_args(c: f64, x: f64) -> Result<f64> {
    let r2 = c - x * x;
    if !(c > 0.0) || x < 0.0 || r2 < -1e-12 {
        return Err(Error::Domain(format!("x = {x} outside [0, sqrt(c)] for c = {c}")));
    }
    Ok(r2.max(0.0).sqrt())
}

/// Plain squared expectation `E min_z ((g0^2 - z^2)^2 + r_y (|g0 x + g1 r| - z)^2)`.
/// Every node is arbitrated against a dense search; the smaller value is used.
pub fn f_q_sq(
    c: f64,
    x: f64,
    ry: f64,
    quad: &QuadratureSpec,
    opt: &OptimizerSettings,
) -> Result<SqExpectation> {
    if !(ry > 0.0) {
        return Err(Error::Domain(format!("r_y must be positive, got {ry}")));
    }
    let r = check_args(c, x)?;
    let nodes = Nodes::new(x, r, quad);
    let (h, bad) = nodes.h_checked(ry, opt.cubic_form, opt.safeguard_points);
    Ok(SqExpectation {
        value: nodes.mean(&h),
        disagreements: bad,
        nodes: nodes.len(),
    })
}

fn plain_sq_max(alpha: f64, r: f64, nodes: &Nodes, opt: &OptimizerSettings) -> (f64, f64) {
    let guarded = opt.cubic_form == CubicForm::Literal;
    let f = |t: f64| {
        let ry = t.exp();
        let h = if guarded {
            nodes.h_checked(ry, opt.cubic_form, opt.safeguard_points).0
        } else {
            nodes.h(ry, opt.cubic_form)
        };
        -(alpha * nodes.mean(&h) - r * r * ry)
    };
    let (lo, hi) = (opt.plain_ry_range.0.ln(), opt.plain_ry_range.1.ln());
    let (t, v) = scan_then_golden(f, lo, hi, opt.plain_points, 1e-9);
    (-v, t.exp())
}

/// Plain squared estimate `max_{r_y} (alpha f_q^sq - r^2 r_y)`.
pub fn phi_plain_sq(
    alpha: f64,
    c: f64,
    x: f64,
    quad: &QuadratureSpec,
    opt: &OptimizerSettings,
) -> Result<RdtEstimate> {
    let query = ManifoldQuery::new(alpha, c, x, Variant::Squared, Level::Plain)?;
    let r = query.r;
    let nodes = Nodes::new(query.x, r, quad);
    let (_, ry) = plain_sq_max(alpha, r, &nodes, opt);
    let fin = f_q_sq(c, query.x, ry, quad, opt)?;
    let value = alpha * fin.value - r * r * ry;
    let coarse = f_q_sq(c, query.x, ry, &quad.halved(), opt)?;
    Ok(RdtEstimate {
        query,
        value,
        inner: InnerValues {
            ry: Some(ry),
            ..Default::default()
        },
        quadrature_error: alpha * (fin.value - coarse.value).abs(),
        converged: true,
        cubic_check: Some((fin.disagreements, fin.nodes)),
    })
}

/// `ln E exp(-c3 min_z(...))` with inner weight `rbar`; `rbar = inf` is the
/// limit `gamma -> 0+`.
pub fn f_q_sq_lift_log(c: f64, x: f64, c3: f64, rbar: f64, quad: &QuadratureSpec, form: CubicForm) -> Result<f64> {
    let r = check_args(c, x)?;
    let nodes = Nodes::new(x, r, quad);
    Ok(nodes.log_mean_exp(&nodes.h(rbar, form), c3))
}

struct LiftedSq<'a> {
    alpha: f64,
    r: f64,
    nodes: Nodes,
    rbars: Vec<f64>,
    table: Vec<Vec<f64>>,
    opt: &'a OptimizerSettings,
}

impl<'a> LiftedSq<'a> {
    fn new(alpha: f64, x: f64, r: f64, quad: &QuadratureSpec, opt: &'a OptimizerSettings) -> Self {
        let nodes = Nodes::new(x, r, quad);
        let mut rbars = log_space(opt.rbar_range.0, opt.rbar_range.1, opt.rbar_points);
        rbars.push(f64::INFINITY);
        let table = rbars.iter().map(|&rb| nodes.h(rb, opt.cubic_form)).collect();
        Self {
            alpha,
            r,
            nodes,
            rbars,
            table,
            opt,
        }
    }

    fn log_f_table(&self, c3: f64) -> Vec<f64> {
        self.table.iter().map(|h| self.nodes.log_mean_exp(h, c3)).collect()
    }

    fn term(&self, c3: f64, ry: f64, rbar: f64, log_f: f64) -> f64 {
        let gamma = if rbar.is_infinite() { 0.0 } else { ry * ry / (4.0 * rbar) };
        sphere_terms(c3, self.r, ry).0 + gamma - self.alpha / c3 * log_f
    }

    fn direct(&self, c3: f64, ry: f64, rbar: f64) -> f64 {
        let h = self.nodes.h(rbar, self.opt.cubic_form);
        self.term(c3, ry, rbar, self.nodes.log_mean_exp(&h, c3))
    }

    /// Table minimum over `rbar`: `(value, index)`.
    fn table_min(&self, c3: f64, ry: f64, log_f: &[f64]) -> (f64, usize) {
        let mut best = (f64::INFINITY, 0);
        for (j, (&rb, &lf)) in self.rbars.iter().zip(log_f).enumerate() {
            let v = self.term(c3, ry, rb, lf);
            if v < best.0 {
                best = (v, j);
            }
        }
        best
    }

    /// Continuous minimum over `rbar`: `(value, rbar)`.
    fn inner(&self, c3: f64, ry: f64) -> (f64, f64) {
        let lf = self.log_f_table(c3);
        let (v0, j) = self.table_min(c3, ry, &lf);
        let k = self.rbars.len() - 1;
        if j == k {
            return (v0, f64::INFINITY);
        }
        let lo = self.rbars[j.saturating_sub(1)].ln();
        let hi = if j + 1 < k { self.rbars[j + 1].ln() } else { self.rbars[j].ln() + 2.0 };
        let (t, v) = golden_section(|t| self.direct(c3, ry, t.exp()), lo, hi, self.opt.inner_tol.max(1e-7));
        if v < v0 {
            (v, t.exp())
        } else {
            (v0, self.rbars[j])
        }
    }
}

/// Lifted squared estimate: max over `(c3, r_y)`, min over `gamma`, the latter
/// searched as `rbar = r_y^2 / (4 gamma)` including the `gamma -> 0+` limit.
pub fn phi_lifted_sq(
    alpha: f64,
    c: f64,
    x: f64,
    quad: &QuadratureSpec,
    opt: &OptimizerSettings,
) -> Result<RdtEstimate> {
    let query = ManifoldQuery::new(alpha, c, x, Variant::Squared, Level::Lifted)?;
    let r = query.r;
    let eng = LiftedSq::new(alpha, query.x, r, quad, opt);
    let c3s = log_space(opt.c3_range.0, opt.c3_range.1, opt.grid_points);
    let rys = log_space(opt.ry_range.0, opt.ry_range.1, opt.grid_points);
    let mut grid = Vec::with_capacity(c3s.len() * rys.len());
    for &c3 in &c3s {
        let lf = eng.log_f_table(c3);
        for &ry in &rys {
            let (v, _) = eng.table_min(c3, ry, &lf);
            if v.is_finite() {
                grid.push((v, c3, ry));
            }
        }
    }
    // The table minimum over rbar overestimates the continuous one, so the
    // leading grid points are re-ranked with the continuous inner search.
    grid.sort_by(|a, b| b.0.total_cmp(&a.0));
    let best = grid
        .iter()
        .take(opt.rerank)
        .map(|&(_, c3, ry)| (eng.inner(c3, ry).0, c3, ry))
        .filter(|p| p.0.is_finite())
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .ok_or_else(|| Error::Numeric(format!("no finite lifted squared objective at x = {x}")))?;
    let bounds = [
        (opt.c3_range.0.ln() - 7.0, opt.c3_range.1.ln() + 7.0),
        (opt.ry_range.0.ln() - 7.0, opt.ry_range.1.ln() + 7.0),
    ];
    let neg = |p: &[f64]| {
        if p.iter().zip(&bounds).any(|(v, b)| *v < b.0 || *v > b.1) {
            return f64::INFINITY;
        }
        let v = eng.inner(p[0].exp(), p[1].exp()).0;
        if v.is_finite() {
            -v
        } else {
            f64::INFINITY
        }
    };
    let step = (opt.c3_range.1 / opt.c3_range.0).ln() / (opt.grid_points.max(2) - 1) as f64;
    let nm = nelder_mead(neg, &[best.1.ln(), best.2.ln()], step, opt.simplex_ftol, 1e-7, opt.simplex_max_iter);
    let (c3, ry) = if -nm.fx >= best.0 {
        (nm.x[0].exp(), nm.x[1].exp())
    } else {
        (best.1, best.2)
    };
    let (value, rbar) = eng.inner(c3, ry);
    let gamma = if rbar.is_infinite() { 0.0 } else { ry * ry / (4.0 * rbar) };

    let (h, bad) = eng.nodes.h_checked(rbar, opt.cubic_form, opt.safeguard_points);
    let checked = eng.term(c3, ry, rbar, eng.nodes.log_mean_exp(&h, c3));
    let coarse_nodes = Nodes::new(query.x, r, &quad.halved());
    let coarse_h = coarse_nodes.h(rbar, opt.cubic_form);
    let coarse = eng.term(c3, ry, rbar, coarse_nodes.log_mean_exp(&coarse_h, c3));
    Ok(RdtEstimate {
        query,
        value: value.min(checked),
        inner: InnerValues {
            ry: Some(ry),
            c3: Some(c3),
            gamma: Some(gamma),
            gamma_sph: Some(sphere_terms(c3, r, ry).1),
        },
        quadrature_error: (coarse - value).abs(),
        converged: nm.converged,
        cubic_check: Some((bad, eng.nodes.len())),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn candidates_match_dense_search() {
        let mut bad = 0;
        let mut total = 0;
        for i in 0..40 {
            for j in 0..40 {
                let a = (0.1 * i as f64).powi(2);
                let b = 0.15 * j as f64;
                for rho in [1e-3, 0.1, 1.0, 10.0, 300.0] {
                    total += 1;
                    let c = inner_min(a, b, rho, CubicForm::Stationary);
                    let d = inner_min_dense(a, b, rho, 200);
                    if (c - d).abs() > 1e-6 {
                        bad += 1;
                    }
                    assert!(c <= d + 1e-9, "a={a} b={b} rho={rho}: {c} vs {d}");
                }
            }
        }
        assert_eq!(bad, 0, "{bad} of {total}");
    }

    #[test]
    fn zero_at_true_signal() {
        let q = QuadratureSpec::default();
        let o = OptimizerSettings::default();
        let f = f_q_sq(1.0, 1.0, 0.7, &q, &o).unwrap();
        assert!(f.value.abs() < 1e-14);
    }

    #[test]
    fn vanishes_as_ry_vanishes() {
        let q = QuadratureSpec::default();
        let o = OptimizerSettings::default();
        let f = f_q_sq(1.0, 0.4, 1e-9, &q, &o).unwrap();
        assert!(f.value < 1e-8);
    }

    #[test]
    fn weights_integrate_to_one() {
        for (x, r) in [(0.0, 1.0), (0.5, 0.75f64.sqrt()), (1.0, 0.0)] {
            let n = Nodes::new(x, r, &QuadratureSpec::default());
            let s: f64 = n.w.iter().sum();
            assert!((s - 1.0).abs() < 1e-12, "x={x}: {s}");
        }
    }
}
