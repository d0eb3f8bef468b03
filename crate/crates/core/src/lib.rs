//! Spectral simulator and verification harness for a coupled stochastic NLS
//! system with quadratic interaction and linear multiplicative noise.
//!
//! Two solvers integrate the same Brownian path: a Strang split-step scheme on
//! the original equations ([`direct`]) and RK4 on the pathwise rescaled system
//! ([`rescaled`]). [`identities`] checks the mass and energy Itô identities and
//! the equivalence of the two routes, [`ensemble`] runs seeded path batches,
//! and [`experiment`] ties the presets to verdicts and output files.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod direct;
pub mod ensemble;
pub mod error;
pub mod experiment;
pub mod functionals;
pub mod grid;
pub mod identities;
pub mod noise;
pub mod params;
pub mod record;
pub mod rescaled;
pub mod solver;

pub use config::{Experiment, Overrides, RunConfig};
pub use error::{Error, Result};
pub use experiment::{run_experiment, write_outputs, ExitStatus, ExperimentOutcome, Verdict};
pub use grid::{ComplexField, Grid, GridSpec};
pub use noise::{BrownianPath, NoiseModel};
pub use params::SystemParams;
pub use record::TrajectoryRecord;
pub use solver::SolverConfig;
