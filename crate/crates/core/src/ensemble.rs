//! Monte Carlo ensembles over independent Brownian paths.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::direct::run_direct;
use crate::error::{Error, Result};
use crate::grid::ComplexField;
use crate::noise::{sample_path, NoiseModel};
use crate::params::SystemParams;
use crate::record::TrajectoryRecord;
use crate::solver::SolverConfig;

/// Environment variable overriding the worker count.
pub const WORKERS_ENV: &str = "SNLS_WORKERS";

/// `|z|` threshold of the martingale test.
pub const Z_THRESHOLD: f64 = 3.0;

/// Relative gap `|mean Q(T) - Q(0)| / max(|Q(0)|, 1)` below which the mean is
/// treated as exactly conserved, whatever the standard error.
pub const DRIFT_TOLERANCE: f64 = 1e-9;

/// Worker count from [`WORKERS_ENV`], if set to a positive integer.
pub fn workers_from_env() -> Result<Option<usize>> {
    match std::env::var(WORKERS_ENV) {
        Err(_) => Ok(None),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::Config(vec![format!(
                "{WORKERS_ENV} must be a positive integer (got {s:?})"
            )])),
        },
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of path `index`: the base seed is mixed before the XOR so that
/// ensembles with neighbouring base seeds do not share paths.
pub fn derive_seed(base_seed: u64, index: u64) -> u64 {
    splitmix64(base_seed) ^ index
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRow {
    pub index: usize,
    pub seed: u64,
    /// Time of the last recorded state.
    pub final_t: f64,
    pub final_q: Option<f64>,
    pub final_e: Option<f64>,
    pub sup_q: Option<f64>,
    /// Sup over samples of `(1/2l)||grad u||^2 + (c/4L)||grad v||^2`.
    pub sup_k: Option<f64>,
    /// Sup over samples of `||u||_{H1} + ||v||_{H1}`.
    pub sup_h1: Option<f64>,
    pub blowup_step: Option<usize>,
    pub error: Option<String>,
}

impl PathRow {
    pub fn from_record(index: usize, record: &TrajectoryRecord) -> Self {
        let last = record.final_sample();
        let fold = |f: &dyn Fn(&crate::functionals::FunctionalSample) -> f64| {
            record.samples.iter().map(f).fold(f64::NEG_INFINITY, f64::max)
        };
        PathRow {
            index,
            seed: record.provenance.seed,
            final_t: last.t,
            final_q: Some(last.q),
            final_e: Some(last.e),
            sup_q: Some(fold(&|s| s.q)),
            sup_k: Some(fold(&|s| s.k)),
            sup_h1: Some(fold(&|s| s.h1_u + s.h1_v)),
            blowup_step: record.blowup.map(|b| b.step),
            error: None,
        }
    }

    fn failed(index: usize, seed: u64, err: &Error) -> Self {
        PathRow {
            index,
            seed,
            final_t: 0.0,
            final_q: None,
            final_e: None,
            sup_q: None,
            sup_k: None,
            sup_h1: None,
            blowup_step: None,
            error: Some(err.to_string()),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }
}

/// Mean, standard error and max over the rows where the value exists.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation over `sqrt(count)`; zero when all values agree.
    pub se: f64,
    pub max: f64,
}

impl Aggregate {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Aggregate {
                count: 0,
                mean: f64::NAN,
                se: f64::NAN,
                max: f64::NAN,
            };
        }
        let constant = values.iter().all(|x| *x == values[0]);
        let mean = if constant { values[0] } else { values.iter().sum::<f64>() / n as f64 };
        let se = if n > 1 && !constant {
            let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Aggregate {
            count: n,
            mean,
            se,
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub n_paths: usize,
    pub base_seed: u64,
    pub rows: Vec<PathRow>,
    pub final_q: Aggregate,
    pub final_e: Aggregate,
    pub sup_q: Aggregate,
    pub sup_k: Aggregate,
    pub sup_h1: Aggregate,
    pub n_failed: usize,
    pub n_blowup: usize,
}

impl EnsembleSummary {
    /// Aggregates recomputed from `rows` in index order.
    pub fn from_rows(base_seed: u64, rows: Vec<PathRow>) -> Self {
        let col = |f: fn(&PathRow) -> Option<f64>| -> Aggregate {
            let v: Vec<f64> = rows.iter().filter_map(f).collect();
            Aggregate::from_values(&v)
        };
        EnsembleSummary {
            n_paths: rows.len(),
            base_seed,
            final_q: col(|r| r.final_q),
            final_e: col(|r| r.final_e),
            sup_q: col(|r| r.sup_q),
            sup_k: col(|r| r.sup_k),
            sup_h1: col(|r| r.sup_h1),
            n_failed: rows.iter().filter(|r| !r.is_ok()).count(),
            n_blowup: rows.iter().filter(|r| r.blowup_step.is_some()).count(),
            rows,
        }
    }

    /// Negative control: adds `rate * final_t` to every final `Q`.
    pub fn with_injected_drift(&self, rate: f64) -> Self {
        let rows = self
            .rows
            .iter()
            .map(|r| PathRow {
                final_q: r.final_q.map(|q| q + rate * r.final_t),
                ..r.clone()
            })
            .collect();
        Self::from_rows(self.base_seed, rows)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleConfig {
    pub solver: SolverConfig,
    pub n_paths: usize,
    pub base_seed: u64,
    /// `None` uses [`WORKERS_ENV`] when set, otherwise all cores.
    pub workers: Option<usize>,
}

/// Runs `n_paths` direct-solver trajectories on derived seeds. Failed paths
/// become rows; the reduction is an ordered fold, so the summary does not
/// depend on the worker count.
pub fn run_ensemble(
    u0: &ComplexField,
    v0: &ComplexField,
    params: &SystemParams,
    model: &NoiseModel,
    config: &EnsembleConfig,
) -> Result<EnsembleSummary> {
    if config.n_paths == 0 {
        return Err(Error::InvalidArgument("n_paths must be >= 1".into()));
    }
    config.solver.validate()?;
    let workers = match config.workers {
        Some(0) => return Err(Error::InvalidArgument("workers must be >= 1".into())),
        Some(n) => Some(n),
        None => workers_from_env()?,
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let solver = SolverConfig {
        dense: false,
        ..config.solver
    };
    let run_one = |index: usize| -> PathRow {
        let seed = derive_seed(config.base_seed, index as u64);
        let rec = sample_path(model, seed, solver.dt, solver.n_steps)
            .and_then(|path| run_direct(u0, v0, params, model, &path, &solver));
        match rec {
            Ok(r) => PathRow::from_record(index, &r),
            Err(e) => PathRow::failed(index, seed, &e),
        }
    };
    let rows: Vec<PathRow> = pool.install(|| (0..config.n_paths).into_par_iter().map(run_one).collect());
    Ok(EnsembleSummary::from_rows(config.base_seed, rows))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MartingaleReport {
    pub q0: f64,
    pub mean: f64,
    pub se: f64,
    /// `(mean - q0) / se`; zero when the gap is within [`DRIFT_TOLERANCE`].
    pub z: f64,
    pub pass: bool,
    /// Zero standard error with a mean away from `q0`.
    pub deterministic_drift: bool,
}

/// Tests `E Q(T) = Q(0)` at `|z| <= 3`.
pub fn martingale_test(summary: &EnsembleSummary, q0: f64) -> Result<MartingaleReport> {
    let a = summary.final_q;
    if a.count == 0 {
        return Err(Error::Undefined("no successful paths".into()));
    }
    let gap = a.mean - q0;
    let conserved = gap.abs() <= DRIFT_TOLERANCE * q0.abs().max(1.0);
    let (z, pass, drift) = if conserved {
        (0.0, true, false)
    } else if a.se == 0.0 {
        (f64::INFINITY.copysign(gap), false, true)
    } else {
        let z = gap / a.se;
        (z, z.abs() <= Z_THRESHOLD, false)
    };
    Ok(MartingaleReport {
        q0,
        mean: a.mean,
        se: a.se,
        z,
        pass,
        deterministic_drift: drift,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupStatistic {
    /// Mean and SE of `sup_t Q`.
    pub q: Aggregate,
    /// Mean and SE of `sup_t (1/2l)||grad u||^2 + (c/4L)||grad v||^2`.
    pub k: Aggregate,
}

pub fn sup_statistic(summary: &EnsembleSummary) -> SupStatistic {
    SupStatistic {
        q: summary.sup_q,
        k: summary.sup_k,
    }
}
