//! `prlab`: theory curves, single solves and phase-transition sweeps.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use prlab_core::dpr::{gradplain, hybrid};
use prlab_core::harness::{
    aggregate, emit_theory_tables, initial_point, sweep_trials, write_overlap_curve_csv, write_trials_csv,
    Initializer, LabConfig, Solver, SweepConfig, SweepResult,
};
use prlab_core::rdt::{manifold_curve, Level, Variant};
use prlab_core::spectral::{optspin_init, overlap_curve, solve_gamma_hat, PreprocessSpec};
use prlab_core::{generate_instance, Error, Instance, RngStream};

#[derive(Parser)]
#[command(name = "prlab", version, about = "Phase retrieval laboratory")]
struct Cli {
    /// Base seed for all random streams.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output file (or directory for multi-file outputs); stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// JSON configuration with optional `sweep` and `theory` sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for curves and sweeps.
    #[arg(long, global = true)]
    parallelism: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimal spectral overlap over a grid of alpha: `alpha,gamma_hat,d_hat,overlap_hat`.
    OverlapCurve {
        #[arg(long, value_delimiter = ',', default_value = "0.6,0.8,1,1.2,1.4,1.6,1.8,2,2.5,3")]
        alphas: Vec<f64>,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
    },
    /// Solve the gamma equation at one alpha.
    GammaSolve {
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
    },
    /// Plain or lifted manifold curve as CSV plus a `.meta` sidecar next to `--out`.
    RdtCurve {
        #[arg(long)]
        alpha: f64,
        #[arg(long, value_enum, default_value_t = VariantArg::NonSquared)]
        variant: VariantArg,
        #[arg(long, value_enum, default_value_t = LevelArg::Lifted)]
        level: LevelArg,
        #[arg(long, default_value_t = 1.0)]
        c: f64,
        /// Overlap grid; defaults to 0.05, 0.10, ..., 0.95.
        #[arg(long, value_delimiter = ',')]
        xs: Option<Vec<f64>>,
        #[arg(long, default_value_t = 1e-3)]
        flat_tol: f64,
    },
    /// Spectral initializer on a fresh instance.
    SpectralInit {
        #[command(flatten)]
        problem: Problem,
        #[arg(long, value_enum, default_value_t = PreprocessArg::Optimal)]
        preprocess: PreprocessArg,
    },
    /// One solver run; `--out` names a directory for per-phase trajectories.
    Solve {
        #[command(flatten)]
        problem: Problem,
        #[arg(long, value_enum, default_value_t = SolverArg::Hybrid)]
        solver: SolverArg,
        #[arg(long = "init", value_enum, default_value_t = InitArg::OptSpin)]
        initializer: InitArg,
        /// Replay a saved instance instead of generating one.
        #[arg(long)]
        instance: Option<PathBuf>,
        /// Save the generated instance.
        #[arg(long)]
        save_instance: Option<PathBuf>,
    },
    /// Phase-transition sweep: per-alpha CSV, with per-trial rows optionally saved.
    Sweep {
        #[command(flatten)]
        sweep: SweepArgs,
        #[arg(long)]
        trials_out: Option<PathBuf>,
    },
    /// Theory against simulation: sweeps each solver/initializer pair and
    /// joins the optimal spectral overlap. With `--theory-dir`, also writes
    /// manifold curves and the flat-region report.
    Compare {
        #[command(flatten)]
        sweep: SweepArgs,
        #[arg(long, value_enum, value_delimiter = ',', default_value = "hybrid,grad-plain")]
        solvers: Vec<SolverArg>,
        #[arg(long, value_enum, value_delimiter = ',', default_value = "opt-spin,identity-spectral")]
        inits: Vec<InitArg>,
        #[arg(long)]
        theory_dir: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Problem {
    #[arg(long, default_value_t = 300)]
    n: usize,
    #[arg(long)]
    alpha: f64,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    alphas: Option<Vec<f64>>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, value_enum)]
    solver: Option<SolverArg>,
    #[arg(long = "init", value_enum)]
    initializer: Option<InitArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    NonSquared,
    Squared,
}

#[derive(Clone, Copy, ValueEnum)]
enum LevelArg {
    Plain,
    Lifted,
}

#[derive(Clone, Copy, ValueEnum)]
enum PreprocessArg {
    Identity,
    Optimal,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    GradPlain,
    Hybrid,
}

#[derive(Clone, Copy, ValueEnum)]
enum InitArg {
    OptSpin,
    IdentitySpectral,
    RandomUnit,
}

impl From<SolverArg> for Solver {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::GradPlain => Solver::GradPlain,
            SolverArg::Hybrid => Solver::Hybrid,
        }
    }
}

impl From<InitArg> for Initializer {
    fn from(i: InitArg) -> Self {
        match i {
            InitArg::OptSpin => Initializer::OptSpin,
            InitArg::IdentitySpectral => Initializer::IdentitySpectral,
            InitArg::RandomUnit => Initializer::RandomUnit,
        }
    }
}

fn output(out: Option<&Path>) -> prlab_core::Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn sweep_config(base: &SweepConfig, cli: &Cli, args: &SweepArgs) -> SweepConfig {
    let mut cfg = base.clone();
    cfg.base_seed = cli.seed;
    if let Some(k) = cli.parallelism {
        cfg.parallelism = k;
    }
    if let Some(n) = args.n {
        cfg.n = n;
    }
    if let Some(a) = &args.alphas {
        cfg.alpha_grid = a.clone();
    }
    if let Some(t) = args.trials {
        cfg.trials_per_alpha = t;
    }
    if let Some(s) = args.solver {
        cfg.solver = s.into();
    }
    if let Some(i) = args.initializer {
        cfg.initializer = i.into();
    }
    cfg
}

fn fmt_transition(r: &SweepResult) -> String {
    r.estimated_transition.map(|t| format!("{t:.4}")).unwrap_or_else(|| "none".into())
}

fn run(cli: &Cli) -> prlab_core::Result<()> {
    let lab = match &cli.config {
        Some(p) => LabConfig::load(p)?,
        None => LabConfig::default(),
    };
    if let Some(k) = cli.parallelism {
        if k == 0 {
            return Err(Error::InvalidArgument("parallelism must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    }
    let out = cli.out.as_deref();
    match &cli.command {
        Command::OverlapCurve { alphas, tol } => {
            let pts = overlap_curve(alphas, *tol)?;
            write_overlap_curve_csv(&pts, output(out)?)?;
        }
        Command::GammaSolve { alpha, tol } => {
            let p = solve_gamma_hat(*alpha, *tol)?;
            write_overlap_curve_csv(&[p], output(out)?)?;
        }
        Command::RdtCurve {
            alpha,
            variant,
            level,
            c,
            xs,
            flat_tol,
        } => {
            let grid = xs.clone().unwrap_or_else(|| lab.theory.x_grid.clone());
            let variant = match variant {
                VariantArg::NonSquared => Variant::NonSquared,
                VariantArg::Squared => Variant::Squared,
            };
            let level = match level {
                LevelArg::Plain => Level::Plain,
                LevelArg::Lifted => Level::Lifted,
            };
            let th = &lab.theory;
            let curve = manifold_curve(*alpha, *c, &grid, variant, level, &th.quadrature, &th.optimizer, *flat_tol)?;
            curve.write_csv(output(out)?)?;
            if let Some(p) = out {
                let meta = p.with_extension("meta");
                prlab_core::harness::write_curve_metadata(
                    &curve,
                    &th.quadrature,
                    &th.optimizer,
                    BufWriter::new(File::create(meta)?),
                )?;
            }
            let failed = curve.rows.iter().filter(|r| r.error.is_some()).count();
            if failed > 0 {
                return Err(Error::Numeric(format!("{failed} curve points failed")));
            }
        }
        Command::SpectralInit { problem, preprocess } => {
            let inst = generate_instance(problem.n, problem.alpha, RngStream::new(cli.seed, 0))?;
            let (spec, name) = match preprocess {
                PreprocessArg::Identity => (PreprocessSpec::identity(), "identity"),
                PreprocessArg::Optimal => (PreprocessSpec::optimal(), "optimal"),
            };
            let r = optspin_init(&inst, &spec, &lab.sweep.eigen, RngStream::new(cli.seed, 1))?;
            let mut w = csv::Writer::from_writer(output(out)?);
            w.write_record(["n", "alpha", "preprocess", "lambda", "overlap_abs", "iterations", "residual"])?;
            w.write_record([
                inst.n.to_string(),
                format!("{:?}", inst.alpha),
                name.to_string(),
                format!("{:?}", r.lambda_spec),
                format!("{:?}", r.overlap_abs),
                r.iterations.to_string(),
                format!("{:e}", r.residual),
            ])?;
            w.flush()?;
        }
        Command::Solve {
            problem,
            solver,
            initializer,
            instance,
            save_instance,
        } => {
            let stream = RngStream::new(cli.seed, 0);
            let inst = match instance {
                Some(p) => Instance::read_text(BufReader::new(File::open(p)?))?,
                None => generate_instance(problem.n, problem.alpha, stream)?,
            };
            if let Some(p) = save_instance {
                inst.write_text(BufWriter::new(File::create(p)?))?;
            }
            let cfg = &lab.sweep;
            let (x0, note) = initial_point(&inst, (*initializer).into(), &cfg.eigen, stream.child(1))?;
            if let Some(note) = note {
                log::warn!("{note}");
            }
            let x0 = x0 * cfg.init_scale;
            let mut dpr = cfg.dpr;
            dpr.eps_success = cfg.eps_success;
            let rec = match solver {
                SolverArg::GradPlain => gradplain(&inst, x0.view(), &dpr)?,
                SolverArg::Hybrid => hybrid(&inst, x0.view(), &dpr, &mut stream.child(2).rng())?,
            };
            if let Some(dir) = out {
                std::fs::create_dir_all(dir)?;
                for (phase, kind) in rec.phases() {
                    let name = format!("phase{phase:03}_{kind:?}.csv").to_lowercase();
                    rec.write_phase_csv(phase, BufWriter::new(File::create(dir.join(name))?))?;
                }
            }
            let mut w = csv::Writer::from_writer(io::stdout().lock());
            w.write_record(["n", "m", "alpha", "final_overlap", "success", "iterations", "termination"])?;
            w.write_record([
                inst.n.to_string(),
                inst.m.to_string(),
                format!("{:?}", inst.alpha),
                format!("{:?}", rec.final_overlap(&inst)),
                rec.success.to_string(),
                rec.iterations.to_string(),
                format!("{:?}", rec.termination),
            ])?;
            w.flush()?;
        }
        Command::Sweep { sweep, trials_out } => {
            let cfg = sweep_config(&lab.sweep, cli, sweep);
            let trials = sweep_trials(&cfg)?;
            if let Some(p) = trials_out {
                write_trials_csv(&trials, BufWriter::new(File::create(p)?))?;
            }
            let r = aggregate(&cfg.alpha_grid, &trials);
            r.write_csv(output(out)?)?;
            eprintln!("estimated_transition={}", fmt_transition(&r));
        }
        Command::Compare {
            sweep,
            solvers,
            inits,
            theory_dir,
        } => {
            let base = sweep_config(&lab.sweep, cli, sweep);
            let theory: Vec<Option<f64>> = base
                .alpha_grid
                .iter()
                .map(|&a| solve_gamma_hat(a, 1e-12).ok().map(|p| p.overlap_hat))
                .collect();
            let mut w = csv::Writer::from_writer(output(out)?);
            w.write_record([
                "alpha",
                "solver",
                "initializer",
                "success_rate",
                "mean_init_overlap",
                "mean_final_overlap",
                "overlap_hat",
                "estimated_transition",
            ])?;
            for &s in solvers {
                for &i in inits {
                    let cfg = SweepConfig {
                        solver: s.into(),
                        initializer: i.into(),
                        ..base.clone()
                    };
                    let trials = sweep_trials(&cfg)?;
                    let r = aggregate(&cfg.alpha_grid, &trials);
                    for (row, th) in r.rows.iter().zip(&theory) {
                        w.write_record([
                            format!("{:?}", row.alpha),
                            format!("{:?}", cfg.solver),
                            format!("{:?}", cfg.initializer),
                            format!("{:?}", row.success_rate),
                            format!("{:?}", row.mean_init_overlap),
                            format!("{:?}", row.mean_final_overlap),
                            th.map(|v| format!("{v:?}")).unwrap_or_default(),
                            r.estimated_transition.map(|v| format!("{v:?}")).unwrap_or_default(),
                        ])?;
                    }
                }
            }
            w.flush()?;
            if let Some(dir) = theory_dir {
                let tables = emit_theory_tables(&lab.theory, Some(dir))?;
                for r in &tables.superposition {
                    eprintln!("alpha {} {} {}: {}", r.alpha, r.variant, r.level, r.verdict());
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numeric() { 2 } else { 1 })
        }
    }
}
