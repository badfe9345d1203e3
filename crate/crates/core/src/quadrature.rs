//! Gaussian-weighted quadrature on the half line and helpers for 2-D rules.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::special::norm_pdf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    /// Gauss-Legendre nodes mapped onto the truncated half line `[0, T]`.
    GaussLegendreTruncated,
    /// Probabilists' Gauss-Hermite nodes folded onto the half line.
    GaussHermiteMapped,
    /// Adaptive panel bisection on `[0, T]` to `target_rel_err`.
    AdaptiveTruncated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureSpec {
    pub scheme: Scheme,
    pub nodes_1d: usize,
    /// Nodes per panel and dimension for the 2-D expectations.
    pub nodes_2d: usize,
    pub truncation: f64,
    pub target_rel_err: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            scheme: Scheme::GaussLegendreTruncated,
            nodes_1d: 200,
            nodes_2d: 64,
            truncation: 8.0,
            target_rel_err: 1e-8,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.nodes_1d < 20 || self.nodes_2d < 8 {
            return Err(invalid("quadrature needs nodes_1d >= 20 and nodes_2d >= 8"));
        }
        if !(self.truncation >= 5.0) {
            return Err(invalid("quadrature truncation must be at least 5"));
        }
        if !(self.target_rel_err > 0.0) {
            return Err(invalid("target_rel_err must be positive"));
        }
        Ok(())
    }

    /// Same spec with twice the nodes in every direction.
    pub fn doubled(&self) -> Self {
        Self {
            nodes_1d: 2 * self.nodes_1d,
            nodes_2d: 2 * self.nodes_2d,
            target_rel_err: self.target_rel_err / 10.0,
            ..*self
        }
    }

    /// Same spec with half the nodes (floored at the minimum sizes).
    pub fn halved(&self) -> Self {
        Self {
            nodes_1d: (self.nodes_1d / 2).max(20),
            nodes_2d: (self.nodes_2d / 2).max(8),
            target_rel_err: self.target_rel_err * 10.0,
            ..*self
        }
    }

    /// `∫_0^∞ f(g) φ(g) dg` with `φ` the standard normal density.
    pub fn integrate_half<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        match self.scheme {
            Scheme::AdaptiveTruncated => {
                adaptive(&|g| f(g) * norm_pdf(g), 0.0, self.truncation, self.target_rel_err)
            }
            _ => {
                let rule = self.half_line_rule();
                rule.nodes
                    .iter()
                    .zip(rule.weights.iter())
                    .map(|(&g, &w)| w * f(g))
                    .sum()
            }
        }
    }

    /// Fixed half-line rule with the Gaussian density folded into the weights.
    /// The adaptive scheme falls back to the Gauss-Legendre rule here.
    pub fn half_line_rule(&self) -> Rule {
        match self.scheme {
            Scheme::GaussHermiteMapped => {
                let (x, w) = &*gauss_hermite(self.nodes_1d);
                Rule {
                    nodes: x.iter().map(|v| v.abs()).collect(),
                    weights: w.iter().map(|v| 0.5 * v).collect(),
                }
            }
            _ => Rule::legendre_on(self.nodes_1d, 0.0, self.truncation, true),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    /// Gauss-Legendre rule on `[a, b]`, optionally with `φ` folded in.
    pub fn legendre_on(n: usize, a: f64, b: f64, gaussian: bool) -> Rule {
        let (x, w) = &*gauss_legendre(n);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let nodes: Vec<f64> = x.iter().map(|t| mid + half * t).collect();
        let weights = nodes
            .iter()
            .zip(w.iter())
            .map(|(g, wi)| wi * half * if gaussian { norm_pdf(*g) } else { 1.0 })
            .collect();
        Rule { nodes, weights }
    }
}

type NodeCache = Mutex<HashMap<usize, Arc<(Vec<f64>, Vec<f64>)>>>;

fn cached(
    cache: &'static OnceLock<NodeCache>,
    n: usize,
    build: fn(usize) -> (Vec<f64>, Vec<f64>),
) -> Arc<(Vec<f64>, Vec<f64>)> {
    let map = cache.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(r) = map.lock().unwrap().get(&n) {
        return r.clone();
    }
    let r = Arc::new(build(n));
    map.lock().unwrap().insert(n, r.clone());
    r
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Arc<(Vec<f64>, Vec<f64>)> {
    static CACHE: OnceLock<NodeCache> = OnceLock::new();
    cached(&CACHE, n, build_legendre)
}

fn build_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p1 = z;
                p0 = 1.0;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Probabilists' Gauss-Hermite rule: `Σ w_i f(x_i) ≈ E f(G)`, `G ~ N(0,1)`.
pub fn gauss_hermite(n: usize) -> Arc<(Vec<f64>, Vec<f64>)> {
    static CACHE: OnceLock<NodeCache> = OnceLock::new();
    cached(&CACHE, n, build_hermite)
}

// Golub-Welsch: nodes are the eigenvalues of the Jacobi matrix of the
// probabilists' Hermite recurrence, weights the squared first components of
// its eigenvectors. Implicit QL with Wilkinson shifts, tracking only row 0.
fn build_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut d = vec![0.0f64; n];
    let mut e: Vec<f64> = (1..n).map(|k| (k as f64).sqrt()).chain([0.0]).collect();
    let mut z0 = vec![0.0; n];
    z0[0] = 1.0;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            assert!(iter < 100, "tridiagonal QL did not converge");
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut underflow = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                let t = z0[i + 1];
                z0[i + 1] = s * z0[i] + c * t;
                z0[i] = c * z0[i] - s * t;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    let mut pairs: Vec<(f64, f64)> = d.into_iter().zip(z0.into_iter().map(|v| v * v)).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

const PANEL: usize = 20;

fn panel(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let (x, w) = &*gauss_legendre(PANEL);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    x.iter().zip(w.iter()).map(|(t, wi)| wi * f(mid + half * t)).sum::<f64>() * half
}

/// Adaptive bisection of Gauss-Legendre panels on `[a, b]`.
pub fn adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, rel: f64) -> f64 {
    let whole = panel(f, a, b);
    let scale = whole.abs().max(f64::MIN_POSITIVE);
    let mut stack = vec![(a, b, whole, 0usize)];
    let mut total = 0.0;
    while let Some((lo, hi, est, depth)) = stack.pop() {
        let mid = 0.5 * (lo + hi);
        let l = panel(f, lo, mid);
        let r = panel(f, mid, hi);
        if (l + r - est).abs() <= rel * scale || depth >= 40 {
            total += l + r;
        } else {
            stack.push((lo, mid, l, depth + 1));
            stack.push((mid, hi, r, depth + 1));
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials() {
        for n in [5usize, 20, 200, 400] {
            let (x, w) = &*gauss_legendre(n);
            let s: f64 = w.iter().sum();
            assert!((s - 2.0).abs() < 1e-13, "n={n}");
            let m2: f64 = x.iter().zip(w).map(|(x, w)| w * x * x).sum();
            assert!((m2 - 2.0 / 3.0).abs() < 1e-13);
        }
    }

    #[test]
    fn hermite_moments() {
        for n in [10usize, 50, 200] {
            let (x, w) = &*gauss_hermite(n);
            let m0: f64 = w.iter().sum();
            let m2: f64 = x.iter().zip(w.iter()).map(|(x, w)| w * x * x).sum();
            let m4: f64 = x.iter().zip(w.iter()).map(|(x, w)| w * x.powi(4)).sum();
            assert!((m0 - 1.0).abs() < 1e-12, "n={n} m0={m0}");
            assert!((m2 - 1.0).abs() < 1e-11, "n={n} m2={m2}");
            assert!((m4 - 3.0).abs() < 1e-10, "n={n} m4={m4}");
        }
    }

    #[test]
    fn half_line_moments_all_schemes() {
        for scheme in [
            Scheme::GaussLegendreTruncated,
            Scheme::GaussHermiteMapped,
            Scheme::AdaptiveTruncated,
        ] {
            let q = QuadratureSpec {
                scheme,
                ..Default::default()
            };
            let m0 = q.integrate_half(|_| 1.0);
            let m2 = q.integrate_half(|g| g * g);
            assert!((m0 - 0.5).abs() < 1e-10, "{scheme:?}");
            assert!((m2 - 0.5).abs() < 1e-10, "{scheme:?}");
        }
    }

    #[test]
    fn half_line_absolute_moment() {
        let q = QuadratureSpec::default();
        let m1 = q.integrate_half(|g| g);
        assert!((m1 - crate::special::FRAC_1_SQRT_2PI).abs() < 1e-13);
    }

    #[test]
    fn rejects_small_rules() {
        let q = QuadratureSpec {
            nodes_1d: 10,
            ..Default::default()
        };
        assert!(q.validate().is_err());
    }
}
