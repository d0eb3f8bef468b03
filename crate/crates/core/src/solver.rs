//! Time-stepping configuration and the sampling / blow-up monitor shared by both
//! integrators.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::FunctionalSample;
use crate::grid::{h1_norm, l2_norm_sq, ComplexField};
use crate::params::SystemParams;
use crate::record::{BlowUp, Provenance, Snapshot, TrajectoryRecord};

/// Default blow-up threshold as a multiple of the initial norm.
pub const DEFAULT_THRESHOLD_FACTOR: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    #[default]
    L2,
    H1,
}

impl NormKind {
    /// `||u|| + ||v||` in the chosen norm.
    pub fn pair_norm(self, u: &ComplexField, v: &ComplexField) -> f64 {
        match self {
            NormKind::L2 => l2_norm_sq(u).sqrt() + l2_norm_sq(v).sqrt(),
            NormKind::H1 => h1_norm(u) + h1_norm(v),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub dt: f64,
    pub n_steps: usize,
    /// Functionals and states are sampled every `record_every` steps and at the end.
    pub record_every: usize,
    /// Norm ceiling; `None` means `DEFAULT_THRESHOLD_FACTOR` times the initial norm.
    pub blowup_threshold: Option<f64>,
    pub norm_kind: NormKind,
    /// Keep the physical state at every step (needed by the identity checks).
    pub dense: bool,
}

impl SolverConfig {
    pub fn new(dt: f64, t_final: f64) -> Result<Self> {
        if !(dt > 0.0 && t_final > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "dt and t_final must be positive (dt = {dt}, t_final = {t_final})"
            )));
        }
        let n = (t_final / dt).round();
        if (n * dt - t_final).abs() > 1e-9 * t_final || n < 1.0 {
            return Err(Error::InvalidArgument(format!(
                "t_final = {t_final} is not a whole number of steps of dt = {dt}"
            )));
        }
        Ok(SolverConfig {
            dt,
            n_steps: n as usize,
            record_every: 1,
            blowup_threshold: None,
            norm_kind: NormKind::L2,
            dense: false,
        })
    }

    pub fn with_record_every(mut self, every: usize) -> Self {
        self.record_every = every;
        self
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.blowup_threshold = Some(threshold);
        self
    }

    pub fn with_norm(mut self, kind: NormKind) -> Self {
        self.norm_kind = kind;
        self
    }

    pub fn dense(mut self, dense: bool) -> Self {
        self.dense = dense;
        self
    }

    /// Same horizon on a step `factor` times smaller.
    pub fn refined(&self, factor: usize) -> Self {
        SolverConfig {
            dt: self.dt / factor as f64,
            n_steps: self.n_steps * factor,
            record_every: self.record_every * factor,
            ..*self
        }
    }

    pub fn t_final(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.dt.is_finite() && self.dt > 0.0) {
            errs.push(format!("dt must be positive (got {})", self.dt));
        }
        if self.n_steps == 0 {
            errs.push("n_steps must be >= 1".to_string());
        }
        if self.record_every == 0 {
            errs.push("record_every must be >= 1".to_string());
        }
        if let Some(t) = self.blowup_threshold {
            if !(t > 0.0) {
                errs.push(format!("blowup_threshold must be positive (got {t})"));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(errs.join("; ")))
        }
    }

    pub(crate) fn check_path_dt(&self, path_dt: f64, path_steps: usize) -> Result<()> {
        if (self.dt - path_dt).abs() > 1e-12 * self.dt {
            return Err(Error::InvalidArgument(format!(
                "solver dt {} differs from path dt {}",
                self.dt, path_dt
            )));
        }
        if path_steps < self.n_steps {
            return Err(Error::InvalidArgument(format!(
                "path has {path_steps} steps, solver needs {}",
                self.n_steps
            )));
        }
        Ok(())
    }
}

/// Sampling, dense storage and the norm-hitting stopping rule.
pub(crate) struct Recorder {
    config: SolverConfig,
    params: SystemParams,
    threshold: f64,
    initial_norm: f64,
    samples: Vec<FunctionalSample>,
    snapshots: Vec<Snapshot>,
    dense: Option<Vec<(ComplexField, ComplexField)>>,
    blowup: Option<BlowUp>,
}

impl Recorder {
    pub fn new(config: &SolverConfig, params: &SystemParams, u0: &ComplexField, v0: &ComplexField) -> Self {
        let initial_norm = config.norm_kind.pair_norm(u0, v0);
        let threshold = match config.blowup_threshold {
            Some(t) => t,
            None if initial_norm > 0.0 => DEFAULT_THRESHOLD_FACTOR * initial_norm,
            None => f64::INFINITY,
        };
        Recorder {
            config: *config,
            params: *params,
            threshold,
            initial_norm,
            samples: Vec::new(),
            snapshots: Vec::new(),
            dense: config.dense.then(Vec::new),
            blowup: None,
        }
    }

    /// Observes the state reached at `step`; returns `true` when the run must stop.
    pub fn observe(
        &mut self,
        step: usize,
        u: &ComplexField,
        v: &ComplexField,
        native: Option<(&ComplexField, &ComplexField)>,
    ) -> Result<bool> {
        if !(u.is_finite() && v.is_finite()) {
            return Err(Error::NonFinite { step });
        }
        let t = step as f64 * self.config.dt;
        if let Some(d) = self.dense.as_mut() {
            d.push((u.clone(), v.clone()));
        }
        let norm = self.config.norm_kind.pair_norm(u, v);
        let hit = norm > self.threshold;
        if hit {
            self.blowup = Some(BlowUp {
                step,
                t,
                norm,
                threshold: self.threshold,
            });
        }
        let last = step == self.config.n_steps;
        if hit || last || step.is_multiple_of(self.config.record_every) {
            self.samples.push(FunctionalSample::compute(t, u, v, &self.params));
            self.snapshots.push(Snapshot {
                step,
                t,
                u: u.clone(),
                v: v.clone(),
                native: native.map(|(y, z)| (y.clone(), z.clone())),
            });
        }
        Ok(hit)
    }

    pub fn finish(self, provenance: Provenance, final_step: usize) -> TrajectoryRecord {
        TrajectoryRecord {
            provenance,
            samples: self.samples,
            snapshots: self.snapshots,
            dense: self.dense,
            blowup: self.blowup,
            final_step,
            threshold: self.threshold,
            initial_norm: self.initial_norm,
        }
    }
}
