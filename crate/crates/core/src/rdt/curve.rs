use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{estimate, Level, ManifoldQuery, OptimizerSettings, RdtEstimate, Variant};
use crate::error::{invalid, Result};
use crate::quadrature::QuadratureSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub x: f64,
    pub estimate: Option<RdtEstimate>,
    pub error: Option<String>,
    pub in_flat_region: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldCurve {
    pub alpha: f64,
    pub c: f64,
    pub variant: Variant,
    pub level: Level,
    pub flat_tol: f64,
    pub rows: Vec<CurveRow>,
}

/// Length of the longest prefix whose values stay within `tol` of the
/// running maximum. A missing value ends the prefix.
pub fn flat_prefix(values: &[Option<f64>], tol: f64) -> usize {
    let mut best = f64::NEG_INFINITY;
    for (i, v) in values.iter().enumerate() {
        match v {
            Some(v) => {
                best = best.max(*v);
                if *v < best - tol {
                    return i;
                }
            }
            None => return i,
        }
    }
    values.len()
}

impl ManifoldCurve {
    /// Largest grid `x` inside the flat region.
    pub fn flat_end(&self) -> Option<f64> {
        self.rows.iter().filter(|r| r.in_flat_region).map(|r| r.x).next_back()
    }

    /// Whether `x` falls inside the annotated flat region.
    pub fn is_flat_at(&self, x: f64) -> bool {
        self.flat_end().is_some_and(|end| x <= end + 1e-12)
    }

    pub fn values(&self) -> Vec<Option<f64>> {
        self.rows.iter().map(|r| r.estimate.map(|e| e.value)).collect()
    }

    /// CSV with header
    /// `alpha,c,x,variant,level,value,sqrt_value,ry,c3,gamma,quad_err,in_flat_region`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "alpha",
            "c",
            "x",
            "variant",
            "level",
            "value",
            "sqrt_value",
            "ry",
            "c3",
            "gamma",
            "quad_err",
            "in_flat_region",
        ])?;
        let opt = |v: Option<f64>| v.map(|v| format!("{v:.17e}")).unwrap_or_default();
        for row in &self.rows {
            let e = row.estimate.as_ref();
            out.write_record([
                format!("{:?}", self.alpha),
                format!("{:?}", self.c),
                format!("{:?}", row.x),
                self.variant.to_string(),
                self.level.to_string(),
                opt(e.map(|e| e.value)),
                opt(e.map(|e| e.value.max(0.0).sqrt())),
                opt(e.and_then(|e| e.inner.ry)),
                opt(e.and_then(|e| e.inner.c3)),
                opt(e.and_then(|e| e.inner.gamma)),
                opt(e.map(|e| e.quadrature_error)),
                row.in_flat_region.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Evaluates one estimate per grid point (in parallel, ordered output) and
/// annotates the flat region.
#[allow(clippy::too_many_arguments)]
pub fn manifold_curve(
    alpha: f64,
    c: f64,
    x_grid: &[f64],
    variant: Variant,
    level: Level,
    quad: &QuadratureSpec,
    opt: &OptimizerSettings,
    flat_tol: f64,
) -> Result<ManifoldCurve> {
    quad.validate()?;
    if x_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("x grid must be strictly increasing"));
    }
    let rows: Vec<(f64, Result<RdtEstimate>)> = x_grid
        .par_iter()
        .map(|&x| {
            let q = ManifoldQuery::new(alpha, c, x, variant, level);
            (x, q.and_then(|q| estimate(&q, quad, opt)))
        })
        .collect();
    let mut rows: Vec<CurveRow> = rows
        .into_iter()
        .map(|(x, r)| match r {
            Ok(e) => CurveRow {
                x,
                estimate: Some(e),
                error: None,
                in_flat_region: false,
            },
            Err(err) => {
                log::warn!("curve point x={x} failed: {err}");
                CurveRow {
                    x,
                    estimate: None,
                    error: Some(err.to_string()),
                    in_flat_region: false,
                }
            }
        })
        .collect();
    let values: Vec<Option<f64>> = rows.iter().map(|r| r.estimate.map(|e| e.value)).collect();
    let k = flat_prefix(&values, flat_tol);
    for row in rows.iter_mut().take(k) {
        row.in_flat_region = true;
    }
    Ok(ManifoldCurve {
        alpha,
        c,
        variant,
        level,
        flat_tol,
        rows,
    })
}
