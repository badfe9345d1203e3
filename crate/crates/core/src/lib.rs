//! Phase retrieval laboratory.
//!
//! Gaussian measurement instances, overlap-optimal spectral initializers,
//! plain and lifted duality-theory manifold curves, descending solvers and
//! a reproducible Monte-Carlo experiment runner.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dpr;
pub mod error;
pub mod harness;
pub mod instance;
pub mod linalg;
pub mod optimize;
pub mod quadrature;
pub mod rdt;
pub mod rng;
pub mod special;
pub mod spectral;

pub use error::{Error, Result};
pub use instance::{generate_instance, overlap, success_check, Instance};
pub use quadrature::{QuadratureSpec, Scheme};
pub use rng::RngStream;
pub use dpr::{gradbar, gradplain, hybrid, reshuffle, DprConfig, RunRecord};
pub use harness::{run_trial, sweep_phase_transition, Initializer, Solver, SweepConfig, SweepResult};
pub use rdt::{estimate, manifold_curve, Level, ManifoldQuery, OptimizerSettings, RdtEstimate, Variant};
pub use spectral::{optspin_init, solve_gamma_hat, top_eigenpair, EigenSettings, PreprocessSpec};
