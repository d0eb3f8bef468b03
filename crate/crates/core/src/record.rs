//! Trajectory records shared by both solvers.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::functionals::FunctionalSample;
use crate::grid::{ComplexField, GridSpec};
use crate::noise::{BrownianPath, NoiseModel};
use crate::params::SystemParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    /// Strang split-step on the Ito system in `(u, v)`.
    Direct,
    /// Method of lines on the rescaled random PDE in `(y, z)`.
    Rescaled,
}

/// Everything needed to decide whether two records describe the same experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub kind: SolverKind,
    pub grid: GridSpec,
    pub params: SystemParams,
    pub noise_mu: Vec<Complex64>,
    pub seed: u64,
    pub dt: f64,
    pub path_level: u32,
    pub n_steps: usize,
}

impl Provenance {
    pub fn new(
        kind: SolverKind,
        params: &SystemParams,
        model: &NoiseModel,
        path: &BrownianPath,
        n_steps: usize,
    ) -> Self {
        Provenance {
            kind,
            grid: *model.grid().spec(),
            params: *params,
            noise_mu: model.modes().iter().map(|m| m.mu).collect(),
            seed: path.seed,
            dt: path.dt,
            path_level: path.level,
            n_steps,
        }
    }

    pub fn is_deterministic(&self) -> bool {
        self.noise_mu.iter().all(|m| *m == Complex64::new(0.0, 0.0))
    }

    /// Same grid, parameters, noise coefficients and Brownian path.
    pub fn matches(&self, other: &Provenance) -> Result<(), String> {
        if self.grid != other.grid {
            return Err("grids differ".into());
        }
        if self.params != other.params {
            return Err("system parameters differ".into());
        }
        if self.noise_mu != other.noise_mu {
            return Err("noise coefficients differ".into());
        }
        if self.seed != other.seed || self.path_level != other.path_level {
            return Err(format!(
                "paths differ (seed {} level {} vs seed {} level {})",
                self.seed, self.path_level, other.seed, other.path_level
            ));
        }
        if self.dt != other.dt {
            return Err(format!("dt differs ({} vs {})", self.dt, other.dt));
        }
        Ok(())
    }

    pub fn matches_path(&self, model: &NoiseModel, path: &BrownianPath) -> Result<(), String> {
        if self.seed != path.seed || self.path_level != path.level || self.dt != path.dt {
            return Err(format!(
                "record was produced on seed {} level {} dt {}, path is seed {} level {} dt {}",
                self.seed, self.path_level, self.dt, path.seed, path.level, path.dt
            ));
        }
        let mu: Vec<Complex64> = model.modes().iter().map(|m| m.mu).collect();
        if mu != self.noise_mu {
            return Err("noise model differs from the one used by the solver".into());
        }
        if *model.grid().spec() != self.grid {
            return Err("noise model grid differs from record grid".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    pub t: f64,
    /// Physical fields `(u, v)`.
    pub u: ComplexField,
    pub v: ComplexField,
    /// Solver variables `(y, z)` for rescaled runs.
    pub native: Option<(ComplexField, ComplexField)>,
}

/// Step at which the configured norm first exceeded the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlowUp {
    pub step: usize,
    pub t: f64,
    pub norm: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub provenance: Provenance,
    pub samples: Vec<FunctionalSample>,
    pub snapshots: Vec<Snapshot>,
    /// Physical `(u, v)` at every step `0..=final_step`, when requested.
    pub dense: Option<Vec<(ComplexField, ComplexField)>>,
    pub blowup: Option<BlowUp>,
    pub final_step: usize,
    pub threshold: f64,
    /// Configured norm of the initial data.
    pub initial_norm: f64,
}

impl TrajectoryRecord {
    pub fn sample_times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn sample_steps(&self) -> Vec<usize> {
        self.snapshots.iter().map(|s| s.step).collect()
    }

    pub fn physical_snapshots(&self) -> Vec<(&ComplexField, &ComplexField)> {
        self.snapshots.iter().map(|s| (&s.u, &s.v)).collect()
    }

    pub fn final_sample(&self) -> &FunctionalSample {
        self.samples.last().expect("records hold at least the initial sample")
    }

    pub fn final_time(&self) -> f64 {
        self.final_step as f64 * self.provenance.dt
    }

    pub fn blew_up(&self) -> bool {
        self.blowup.is_some()
    }
}
