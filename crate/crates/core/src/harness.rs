//! Experiment runner: single trials, phase-transition sweeps and theory
//! tables.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array1;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dpr::{gradplain, hybrid, DprConfig, RunRecord};
use crate::error::{invalid, Error, Result};
use crate::instance::{generate_instance, norm, overlap};
use crate::quadrature::QuadratureSpec;
use crate::rdt::{manifold_curve, Level, ManifoldCurve, OptimizerSettings, Variant};
use crate::rng::RngStream;
use crate::spectral::{optspin_init, overlap_curve, EigenSettings, OptSpinTheoryPoint, PreprocessSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Solver {
    GradPlain,
    Hybrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Initializer {
    OptSpin,
    IdentitySpectral,
    RandomUnit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub n: usize,
    pub alpha_grid: Vec<f64>,
    pub trials_per_alpha: usize,
    pub solver: Solver,
    pub initializer: Initializer,
    pub eps_success: f64,
    pub base_seed: u64,
    pub parallelism: usize,
    /// Norm given to the unit-norm initializer before the solver starts.
    pub init_scale: f64,
    pub dpr: DprConfig,
    pub eigen: EigenSettings,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            n: 300,
            alpha_grid: (10..=22).map(|k| k as f64 / 10.0).collect(),
            trials_per_alpha: 20,
            solver: Solver::Hybrid,
            initializer: Initializer::OptSpin,
            eps_success: 1e-5,
            base_seed: 0,
            parallelism: 1,
            init_scale: 0.5,
            dpr: DprConfig::default(),
            eigen: EigenSettings::default(),
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials_per_alpha == 0 {
            return Err(invalid("trials_per_alpha must be at least 1"));
        }
        if self.alpha_grid.is_empty() || self.alpha_grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("alpha_grid must be non-empty and strictly increasing"));
        }
        if !(self.init_scale > 0.0) {
            return Err(invalid("init_scale must be positive"));
        }
        if !(self.eps_success > 0.0) {
            return Err(invalid("eps_success must be positive"));
        }
        self.dpr.validate()
    }
}

/// Outcome of one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub alpha_index: usize,
    pub trial: usize,
    pub alpha: f64,
    pub init_overlap: f64,
    pub final_overlap: f64,
    pub success: bool,
    pub iters: usize,
    pub wall_time: f64,
    /// Set when a component failed; such trials count as failures, not as
    /// unsuccessful recoveries.
    pub failure: Option<String>,
    /// Non-fatal remarks, such as an eigensolver fallback.
    pub note: Option<String>,
}

fn random_unit(n: usize, stream: RngStream) -> Array1<f64> {
    let mut rng = stream.rng();
    let v = Array1::from_shape_simple_fn(n, || rng.sample::<f64, _>(StandardNormal));
    let s = norm(v.view());
    v / s
}

/// Initial point of unit norm plus an optional remark.
pub fn initial_point(
    instance: &crate::instance::Instance,
    initializer: Initializer,
    eigen: &EigenSettings,
    stream: RngStream,
) -> Result<(Array1<f64>, Option<String>)> {
    let spec = match initializer {
        Initializer::RandomUnit => return Ok((random_unit(instance.n, stream), None)),
        Initializer::OptSpin => PreprocessSpec::optimal(),
        Initializer::IdentitySpectral => PreprocessSpec::identity(),
    };
    match optspin_init(instance, &spec, eigen, stream) {
        Ok(r) => Ok((r.x_spec, None)),
        Err(Error::Convergence {
            iterations,
            residual,
            best,
        }) => {
            let v = Array1::from(best);
            let s = norm(v.view());
            if !(s > 0.0) {
                return Err(Error::Numeric("eigensolver returned a zero vector".into()));
            }
            Ok((
                v / s,
                Some(format!(
                    "eigensolver stopped after {iterations} iterations at residual {residual:.3e}; best iterate used"
                )),
            ))
        }
        Err(e) => Err(e),
    }
}

/// Runs one trial on the instance drawn from `stream`.
pub fn run_trial(
    n: usize,
    alpha: f64,
    solver: Solver,
    initializer: Initializer,
    cfg: &SweepConfig,
    stream: RngStream,
) -> TrialRow {
    let start = Instant::now();
    let mut row = TrialRow {
        alpha_index: 0,
        trial: 0,
        alpha,
        init_overlap: f64::NAN,
        final_overlap: f64::NAN,
        success: false,
        iters: 0,
        wall_time: 0.0,
        failure: None,
        note: None,
    };
    let outcome = (|| -> Result<RunRecord> {
        let instance = generate_instance(n, alpha, stream)?;
        let (x0, note) = initial_point(&instance, initializer, &cfg.eigen, stream.child(1))?;
        row.note = note;
        row.init_overlap = overlap(x0.view(), instance.x_true.view())?.abs();
        let x0 = x0 * cfg.init_scale;
        let mut dpr = cfg.dpr;
        dpr.eps_success = cfg.eps_success;
        let rec = match solver {
            Solver::GradPlain => gradplain(&instance, x0.view(), &dpr)?,
            Solver::Hybrid => hybrid(&instance, x0.view(), &dpr, &mut stream.child(2).rng())?,
        };
        row.final_overlap = rec.final_overlap(&instance);
        Ok(rec)
    })();
    match outcome {
        Ok(rec) => {
            row.success = rec.success;
            row.iters = rec.iterations;
        }
        Err(e) => row.failure = Some(e.to_string()),
    }
    row.wall_time = start.elapsed().as_secs_f64();
    row
}

/// Per-alpha aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub successes: usize,
    pub trials: usize,
    pub success_rate: f64,
    pub mean_init_overlap: f64,
    pub mean_final_overlap: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// Linear interpolation of the first upward 50% crossing; `None` when the
    /// rates never cross inside the grid.
    pub estimated_transition: Option<f64>,
}

impl SweepResult {
    /// CSV `alpha,successes,trials,success_rate,mean_init_overlap,mean_final_overlap,failures`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.rows {
            out.serialize(r)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn mean_finite(v: impl Iterator<Item = f64>) -> f64 {
    let (s, k) = v.filter(|x| x.is_finite()).fold((0.0, 0usize), |(s, k), x| (s + x, k + 1));
    if k == 0 {
        f64::NAN
    } else {
        s / k as f64
    }
}

/// 50% crossing between consecutive grid points, strictly inside the grid.
pub fn estimate_transition(alphas: &[f64], rates: &[f64]) -> Option<f64> {
    if rates.first().map_or(true, |&r| r >= 0.5) {
        return None;
    }
    for j in 1..rates.len() {
        if rates[j] >= 0.5 {
            let (a0, a1, r0, r1) = (alphas[j - 1], alphas[j], rates[j - 1], rates[j]);
            let t = a0 + (0.5 - r0) / (r1 - r0) * (a1 - a0);
            return (t > alphas[0] && t < alphas[alphas.len() - 1]).then_some(t);
        }
    }
    None
}

/// Deterministic fold of trial rows (in any order) into a sweep result.
pub fn aggregate(alpha_grid: &[f64], trials: &[TrialRow]) -> SweepResult {
    let rows: Vec<SweepRow> = alpha_grid
        .iter()
        .enumerate()
        .map(|(i, &alpha)| {
            let mut sel: Vec<&TrialRow> = trials.iter().filter(|t| t.alpha_index == i).collect();
            sel.sort_by_key(|t| t.trial);
            let successes = sel.iter().filter(|t| t.success).count();
            let n = sel.len();
            SweepRow {
                alpha,
                successes,
                trials: n,
                success_rate: if n == 0 { 0.0 } else { successes as f64 / n as f64 },
                mean_init_overlap: mean_finite(sel.iter().map(|t| t.init_overlap)),
                mean_final_overlap: mean_finite(sel.iter().map(|t| t.final_overlap)),
                failures: sel.iter().filter(|t| t.failure.is_some()).count(),
            }
        })
        .collect();
    let rates: Vec<f64> = rows.iter().map(|r| r.success_rate).collect();
    SweepResult {
        estimated_transition: estimate_transition(alpha_grid, &rates),
        rows,
    }
}

/// All trials of a sweep in grid-major order.
pub fn sweep_trials(cfg: &SweepConfig) -> Result<Vec<TrialRow>> {
    cfg.validate()?;
    let tasks: Vec<(usize, usize)> = (0..cfg.alpha_grid.len())
        .flat_map(|i| (0..cfg.trials_per_alpha).map(move |t| (i, t)))
        .collect();
    let run = |&(i, t): &(usize, usize)| {
        let stream = RngStream::for_trial(cfg.base_seed, i as u32, t as u32);
        let mut row = run_trial(cfg.n, cfg.alpha_grid[i], cfg.solver, cfg.initializer, cfg, stream);
        row.alpha_index = i;
        row.trial = t;
        row
    };
    if cfg.parallelism <= 1 {
        return Ok(tasks.iter().map(run).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    Ok(pool.install(|| tasks.par_iter().map(run).collect()))
}

pub fn sweep_phase_transition(cfg: &SweepConfig) -> Result<SweepResult> {
    let trials = sweep_trials(cfg)?;
    Ok(aggregate(&cfg.alpha_grid, &trials))
}

/// Per-trial CSV with the [`TrialRow`] fields as header.
pub fn write_trials_csv<W: Write>(trials: &[TrialRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for t in trials {
        out.serialize(t)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_trials_csv<R: Read>(r: R) -> Result<Vec<TrialRow>> {
    let mut rd = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for rec in rd.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

/// CSV `alpha,gamma_hat,d_hat,overlap_hat` with 17 significant digits.
pub fn write_overlap_curve_csv<W: Write>(points: &[OptSpinTheoryPoint], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["alpha", "gamma_hat", "d_hat", "overlap_hat"])?;
    for p in points {
        out.write_record([
            format!("{:.16e}", p.alpha),
            format!("{:.16e}", p.gamma_hat),
            format!("{:.16e}", p.d_hat),
            format!("{:.16e}", p.overlap_hat),
        ])?;
    }
    out.flush()?;
    Ok(())
}

fn flatten(prefix: &str, v: &serde_json::Value, out: &mut BTreeMap<String, String>) {
    match v {
        serde_json::Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        other => {
            out.insert(prefix.to_string(), other.to_string());
        }
    }
}

/// Plain `key=value` sidecar describing how a curve was computed.
pub fn write_curve_metadata<W: Write>(
    curve: &ManifoldCurve,
    quad: &QuadratureSpec,
    opt: &OptimizerSettings,
    mut w: W,
) -> Result<()> {
    let mut map = BTreeMap::new();
    map.insert("alpha".into(), format!("{:?}", curve.alpha));
    map.insert("c".into(), format!("{:?}", curve.c));
    map.insert("variant".into(), curve.variant.to_string());
    map.insert("level".into(), curve.level.to_string());
    map.insert("flat_tol".into(), format!("{:?}", curve.flat_tol));
    map.insert("points".into(), curve.rows.len().to_string());
    flatten("quadrature", &serde_json::to_value(quad)?, &mut map);
    flatten("optimizer", &serde_json::to_value(opt)?, &mut map);
    for (k, v) in map {
        writeln!(w, "{k}={v}")?;
    }
    Ok(())
}

/// Settings for [`emit_theory_tables`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TheoryConfig {
    pub alpha_grid: Vec<f64>,
    pub x_grid: Vec<f64>,
    pub c: f64,
    pub curves: Vec<(Variant, Level)>,
    pub flat_tol: f64,
    pub gamma_tol: f64,
    pub quadrature: QuadratureSpec,
    pub optimizer: OptimizerSettings,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        Self {
            alpha_grid: vec![1.4, 1.6],
            x_grid: (1..20).map(|k| k as f64 / 20.0).collect(),
            c: 1.0,
            curves: vec![(Variant::Squared, Level::Lifted)],
            flat_tol: 1e-3,
            gamma_tol: 1e-12,
            quadrature: QuadratureSpec::default(),
            optimizer: OptimizerSettings::default(),
        }
    }
}

/// Whether the OptSpin overlap falls inside a curve's flat region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperpositionRow {
    pub alpha: f64,
    pub variant: Variant,
    pub level: Level,
    pub overlap_hat: f64,
    pub flat_end: Option<f64>,
    pub inside: bool,
}

impl SuperpositionRow {
    pub fn verdict(&self) -> &'static str {
        if self.inside {
            "inside flat region"
        } else {
            "outside flat region"
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoryTables {
    pub overlap: Vec<OptSpinTheoryPoint>,
    pub curves: Vec<ManifoldCurve>,
    pub superposition: Vec<SuperpositionRow>,
    pub files: Vec<PathBuf>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Computes the OptSpin overlap curve and the requested manifold curves (with
/// the OptSpin overlap inserted into each x grid), and writes them to
/// `out_dir` when given.
pub fn emit_theory_tables(cfg: &TheoryConfig, out_dir: Option<&Path>) -> Result<TheoryTables> {
    let overlap = overlap_curve(&cfg.alpha_grid, cfg.gamma_tol)?;
    let mut curves = Vec::new();
    let mut superposition = Vec::new();
    for p in &overlap {
        let mut grid = cfg.x_grid.clone();
        if !grid.iter().any(|&x| (x - p.overlap_hat).abs() < 1e-12) {
            grid.push(p.overlap_hat);
        }
        grid.sort_by(f64::total_cmp);
        for &(variant, level) in &cfg.curves {
            let curve = manifold_curve(
                p.alpha,
                cfg.c,
                &grid,
                variant,
                level,
                &cfg.quadrature,
                &cfg.optimizer,
                cfg.flat_tol,
            )?;
            superposition.push(SuperpositionRow {
                alpha: p.alpha,
                variant,
                level,
                overlap_hat: p.overlap_hat,
                flat_end: curve.flat_end(),
                inside: curve.is_flat_at(p.overlap_hat),
            });
            curves.push(curve);
        }
    }
    let mut files = Vec::new();
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        let path = dir.join("overlap_curve.csv");
        write_overlap_curve_csv(&overlap, create(&path)?)?;
        files.push(path);
        for curve in &curves {
            let stem = format!("curve_a{}_{}_{}", curve.alpha, curve.variant, curve.level);
            let path = dir.join(format!("{stem}.csv"));
            curve.write_csv(create(&path)?)?;
            files.push(path);
            let path = dir.join(format!("{stem}.meta"));
            write_curve_metadata(curve, &cfg.quadrature, &cfg.optimizer, create(&path)?)?;
            files.push(path);
        }
        let path = dir.join("superposition.csv");
        let mut out = csv::Writer::from_writer(create(&path)?);
        out.write_record(["alpha", "variant", "level", "overlap_hat", "flat_end", "report"])?;
        for r in &superposition {
            out.write_record([
                format!("{:?}", r.alpha),
                r.variant.to_string(),
                r.level.to_string(),
                format!("{:.17e}", r.overlap_hat),
                r.flat_end.map(|v| format!("{v:?}")).unwrap_or_default(),
                r.verdict().to_string(),
            ])?;
        }
        out.flush()?;
        files.push(path);
    }
    Ok(TheoryTables {
        overlap,
        curves,
        superposition,
        files,
    })
}

/// JSON configuration file; every section and field is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabConfig {
    pub sweep: SweepConfig,
    pub theory: TheoryConfig,
}

impl LabConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transition_interpolation() {
        let a = [1.0, 1.1, 1.2, 1.3];
        assert_eq!(estimate_transition(&a, &[0.0, 0.2, 0.8, 1.0]), Some(1.15));
        assert_eq!(estimate_transition(&a, &[0.6, 0.2, 0.8, 1.0]), None);
        assert_eq!(estimate_transition(&a, &[0.0, 0.0, 0.0, 0.4]), None);
        assert_eq!(estimate_transition(&a, &[0.0, 0.0, 0.0, 0.5]), None);
    }

    #[test]
    fn aggregate_is_order_free() {
        let mk = |i, t, s| TrialRow {
            alpha_index: i,
            trial: t,
            alpha: [1.0, 2.0][i],
            init_overlap: 0.5,
            final_overlap: if s { 1.0 } else { 0.1 },
            success: s,
            iters: 1,
            wall_time: 0.0,
            failure: None,
            note: None,
        };
        let rows = vec![mk(0, 0, false), mk(0, 1, true), mk(1, 0, true), mk(1, 1, true)];
        let mut rev = rows.clone();
        rev.reverse();
        let a = aggregate(&[1.0, 2.0], &rows);
        assert_eq!(a, aggregate(&[1.0, 2.0], &rev));
        assert_eq!(a.rows[0].success_rate, 0.5);
        assert_eq!(a.estimated_transition, None);
    }

    #[test]
    fn config_parsing() {
        let c = LabConfig::from_json_str(r#"{"sweep": {"n": 50, "alpha_grid": [2.0, 3.0]}}"#).unwrap();
        assert_eq!(c.sweep.n, 50);
        assert_eq!(c.sweep.trials_per_alpha, 20);
        assert!(LabConfig::from_json_str("{\"sweep\": 3}").is_err());
        let mut s = SweepConfig::default();
        s.alpha_grid = vec![2.0, 1.0];
        assert!(s.validate().is_err());
    }
}
