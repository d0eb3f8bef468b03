//! Experiment presets, verdicts and serialized outputs.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{Experiment, RunConfig};
use crate::direct::run_direct;
use crate::ensemble::{derive_seed, martingale_test, run_ensemble, sup_statistic, EnsembleConfig};
use crate::error::{Error, Result};
use crate::functionals::{mass_q, FunctionalSample, ENERGY_DESCRIPTION};
use crate::grid::{ComplexField, THETA_DESCRIPTION};
use crate::identities::{
    coupled_paths, deterministic_conservation, energy_identity_residual_with, equivalence_residual,
    mass_identity_residual_with, observed_order, EnergyIdentityForm, EnergyOptions, ItoQuadrature, ResidualSeries,
};
use crate::noise::{sample_path, NoiseModel};
use crate::params::SystemParams;
use crate::record::TrajectoryRecord;
use crate::rescaled::{run_rescaled, RescaledOptions, DEFAULT_OVERFLOW_CAP, DEFAULT_STABILITY_FACTOR};
use crate::solver::SolverConfig;

pub const CSV_HEADER: [&str; 12] = [
    "t",
    "Q",
    "E",
    "K",
    "P",
    "l2_u",
    "l2_v",
    "h1_u",
    "h1_v",
    "mass_residual",
    "energy_residual",
    "equivalence_residual",
];

/// Number of step sizes in refinement studies: `dt, dt/2, dt/4`.
pub const REFINEMENT_LEVELS: usize = 3;
pub const EQUIVALENCE_TOL: f64 = 1e-3;
/// Allowed growth factor between consecutive refinement levels.
pub const MONOTONE_BAND: f64 = 1.5;
pub const MIN_OBSERVED_ORDER: f64 = 0.8;
pub const CONSERVATIVE_Q_TOL: f64 = 1e-7;
pub const DETERMINISTIC_Q_TOL: f64 = 1e-8;
pub const ORDER2_RATIO: (f64, f64) = (3.0, 5.0);
pub const INJECTED_DRIFT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Pass = 0,
    AcceptanceFailure = 1,
    ConfigError = 2,
    NumericalFailure = 3,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }

    pub fn for_error(e: &Error) -> Self {
        match e {
            Error::AmplitudeOverflow { .. } | Error::NonFinite { .. } => ExitStatus::NumericalFailure,
            _ => ExitStatus::ConfigError,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Criterion {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    /// `"<="`, `">="`, `"<"` or `"in"` (then `threshold` is the lower end and
    /// `upper` the upper end).
    pub comparison: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    pub pass: bool,
}

impl Criterion {
    fn le(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Criterion {
            name: name.into(),
            value,
            threshold,
            comparison: "<=",
            upper: None,
            pass: value <= threshold,
        }
    }

    fn ge(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Criterion {
            name: name.into(),
            value,
            threshold,
            comparison: ">=",
            upper: None,
            pass: value >= threshold,
        }
    }

    fn lt(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Criterion {
            comparison: "<",
            pass: value < threshold,
            ..Criterion::le(name, value, threshold)
        }
    }

    fn within(name: impl Into<String>, value: f64, lo: f64, hi: f64) -> Self {
        Criterion {
            name: name.into(),
            value,
            threshold: lo,
            comparison: "in",
            upper: Some(hi),
            pass: value >= lo && value <= hi,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub experiment: Experiment,
    pub pass: bool,
    /// `"pass"`, `"fail"`, `"detector"` (blow-up demo) or `"no-rule"` (custom).
    pub status: &'static str,
    pub criteria: Vec<Criterion>,
    pub details: Value,
}

impl Verdict {
    fn judged(experiment: Experiment, criteria: Vec<Criterion>, details: Value) -> Self {
        let pass = criteria.iter().all(|c| c.pass);
        Verdict {
            experiment,
            pass,
            status: if pass { "pass" } else { "fail" },
            criteria,
            details,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeRow {
    pub sample: FunctionalSample,
    pub mass_residual: Option<f64>,
    pub energy_residual: Option<f64>,
    pub equivalence_residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub config: RunConfig,
    pub verdict: Verdict,
    pub timeseries: Vec<TimeRow>,
    /// One JSON object per path for ensemble-type presets.
    pub path_rows: Vec<Value>,
    pub seeds: Vec<u64>,
    pub elapsed_seconds: f64,
}

impl ExperimentOutcome {
    pub fn exit_status(&self) -> ExitStatus {
        if self.verdict.pass {
            ExitStatus::Pass
        } else {
            ExitStatus::AcceptanceFailure
        }
    }
}

struct Setup {
    params: SystemParams,
    model: NoiseModel,
    u0: ComplexField,
    v0: ComplexField,
    solver: SolverConfig,
}

fn rows_from(record: &TrajectoryRecord) -> Vec<TimeRow> {
    record
        .samples
        .iter()
        .map(|s| TimeRow {
            sample: *s,
            mass_residual: None,
            energy_residual: None,
            equivalence_residual: None,
        })
        .collect()
}

fn pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let workers = match workers {
        Some(n) => Some(n),
        None => crate::ensemble::workers_from_env()?,
    };
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))
}

fn levels(solver: &SolverConfig) -> Vec<SolverConfig> {
    (0..REFINEMENT_LEVELS).map(|l| solver.refined(1 << l)).collect()
}

fn rms(xs: &[f64]) -> f64 {
    (xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Residuals at or below this level count as exact agreement.
pub const RESIDUAL_FLOOR: f64 = 1e-14;

fn level_ratio(fine: f64, coarse: f64) -> f64 {
    if fine <= RESIDUAL_FLOOR {
        0.0
    } else {
        fine / coarse
    }
}

fn monotone_criteria(prefix: &str, values: &[f64], out: &mut Vec<Criterion>) {
    for w in 0..values.len() - 1 {
        out.push(Criterion::le(
            format!("{prefix} growth factor level {} -> {}", w, w + 1),
            level_ratio(values[w + 1], values[w]),
            MONOTONE_BAND,
        ));
    }
    out.push(Criterion::lt(
        format!("{prefix} finest / coarsest"),
        level_ratio(values[values.len() - 1], values[0]),
        1.0,
    ));
}

/// Runs the preset selected by `config.experiment`. `workers` falls back to the
/// `SNLS_WORKERS` environment variable, then to all cores.
pub fn run_experiment(config: &RunConfig, workers: Option<usize>) -> Result<ExperimentOutcome> {
    let violations = config.violations();
    if !violations.is_empty() {
        return Err(Error::Config(violations));
    }
    let start = Instant::now();
    let grid = config.grid()?;
    let model = config.noise_model(&grid)?;
    let (u0, v0) = config.initial_data(&grid);
    let setup = Setup {
        params: config.params,
        model,
        u0,
        v0,
        solver: config.solver_config()?,
    };
    let (verdict, timeseries, path_rows, seeds) = match config.experiment {
        Experiment::Equivalence => equivalence(config, &setup)?,
        Experiment::MassIdentity | Experiment::EnergyIdentity => identity_study(config, &setup, workers)?,
        Experiment::Conservation => conservation(config, &setup)?,
        Experiment::Martingale => martingale(config, &setup, workers)?,
        Experiment::BlowupDemo | Experiment::Custom => single(config, &setup)?,
    };
    Ok(ExperimentOutcome {
        config: config.clone(),
        verdict,
        timeseries,
        path_rows,
        seeds,
        elapsed_seconds: start.elapsed().as_secs_f64(),
    })
}

type PresetResult = (Verdict, Vec<TimeRow>, Vec<Value>, Vec<u64>);

fn equivalence(config: &RunConfig, s: &Setup) -> Result<PresetResult> {
    let lv = levels(&s.solver);
    let paths = coupled_paths(&s.model, config.seed, s.solver.dt, s.solver.n_steps, REFINEMENT_LEVELS)?;
    let mut finals = Vec::new();
    let mut compared_until = Vec::new();
    let mut rows = Vec::new();
    let opts = RescaledOptions::default();
    for (cfg, path) in lv.iter().zip(&paths) {
        let a = run_direct(&s.u0, &s.v0, &s.params, &s.model, path, cfg)?;
        let b = run_rescaled(&s.u0, &s.v0, &s.params, &s.model, path, cfg, &opts)?;
        let eq = equivalence_residual(&a, &b, &s.model, path)?;
        finals.push(eq.final_residual());
        compared_until.push(eq.times.last().copied().unwrap_or(0.0));
        rows = rows_from(&a);
        for (r, x) in rows.iter_mut().zip(&eq.residual) {
            r.equivalence_residual = Some(*x);
        }
    }
    let t_final = s.solver.t_final();
    let shortfall = compared_until.iter().map(|t| t_final - t).fold(0.0, f64::max);
    let mut crit = vec![
        Criterion::le("comparison horizon shortfall (blow-up stop)", shortfall, 0.5 * s.solver.dt),
        Criterion::le("finest relative residual", finals[finals.len() - 1], EQUIVALENCE_TOL),
    ];
    monotone_criteria("residual", &finals, &mut crit);
    let details = json!({
        "dt": lv.iter().map(|c| c.dt).collect::<Vec<_>>(),
        "final_residual": finals,
        "compared_until": compared_until,
    });
    Ok((Verdict::judged(config.experiment, crit, details), rows, Vec::new(), vec![config.seed]))
}

#[derive(Serialize)]
struct IdentityRow {
    index: usize,
    seed: u64,
    /// Final residual per level with the default quadrature.
    residual: Vec<f64>,
    residual_left_point: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    residual_as_published: Option<Vec<f64>>,
}

fn identity_study(config: &RunConfig, s: &Setup, workers: Option<usize>) -> Result<PresetResult> {
    let mass = config.experiment == Experiment::MassIdentity;
    let lv: Vec<SolverConfig> = levels(&s.solver).into_iter().map(|c| c.dense(true)).collect();
    let deterministic = s.model.is_empty();
    let n_paths = if deterministic { 1 } else { config.n_paths };
    let seeds: Vec<u64> = (0..n_paths as u64).map(|i| derive_seed(config.seed, i)).collect();
    let residual = |rec: &TrajectoryRecord, path: &crate::noise::BrownianPath, q: ItoQuadrature, form: EnergyIdentityForm| -> Result<ResidualSeries> {
        if mass {
            mass_identity_residual_with(rec, &s.model, path, s.params.c, q)
        } else {
            energy_identity_residual_with(rec, &s.model, path, &s.params, EnergyOptions { form, quadrature: q })
        }
    };
    let run_path = |index: usize| -> Result<(IdentityRow, Option<Vec<TimeRow>>)> {
        let paths = coupled_paths(&s.model, seeds[index], s.solver.dt, s.solver.n_steps, REFINEMENT_LEVELS)?;
        let mut row = IdentityRow {
            index,
            seed: seeds[index],
            residual: Vec::new(),
            residual_left_point: Vec::new(),
            residual_as_published: (!mass).then(Vec::new),
        };
        let mut ts = None;
        for (l, (cfg, path)) in lv.iter().zip(&paths).enumerate() {
            let rec = run_direct(&s.u0, &s.v0, &s.params, &s.model, path, cfg)?;
            let main = residual(&rec, path, ItoQuadrature::LeftPointCorrected, EnergyIdentityForm::ItoCorrected)?;
            row.residual.push(main.final_residual());
            let left = residual(&rec, path, ItoQuadrature::LeftPoint, EnergyIdentityForm::ItoCorrected)?;
            row.residual_left_point.push(left.final_residual());
            if let Some(p) = row.residual_as_published.as_mut() {
                let r = residual(&rec, path, ItoQuadrature::LeftPointCorrected, EnergyIdentityForm::AsPublished)?;
                p.push(r.final_residual());
            }
            if index == 0 && l == REFINEMENT_LEVELS - 1 {
                let mut rows = rows_from(&rec);
                for (r, x) in rows.iter_mut().zip(&main.residual) {
                    if mass {
                        r.mass_residual = Some(*x);
                    } else {
                        r.energy_residual = Some(*x);
                    }
                }
                ts = Some(rows);
            }
        }
        Ok((row, ts))
    };
    let results: Vec<Result<(IdentityRow, Option<Vec<TimeRow>>)>> =
        pool(workers)?.install(|| (0..n_paths).into_par_iter().map(run_path).collect());
    let mut rows = Vec::new();
    let mut ts = Vec::new();
    for r in results {
        let (row, t) = r?;
        if let Some(t) = t {
            ts = t;
        }
        rows.push(row);
    }
    let dts: Vec<f64> = lv.iter().map(|c| c.dt).collect();
    let level_rms = |sel: &dyn Fn(&IdentityRow) -> &Vec<f64>| -> Vec<f64> {
        (0..REFINEMENT_LEVELS)
            .map(|l| rms(&rows.iter().map(|r| sel(r)[l]).collect::<Vec<_>>()))
            .collect()
    };
    let main = level_rms(&|r| &r.residual);
    let left = level_rms(&|r| &r.residual_left_point);
    let order = |v: &[f64]| observed_order(&dts, v).unwrap_or(f64::NAN);
    let mut details = json!({
        "dt": dts,
        "n_paths": n_paths,
        "rms_residual": main,
        "observed_order": order(&main),
        "rms_residual_left_point": left,
        "observed_order_left_point": order(&left),
        "quadrature": "left-point-corrected",
    });
    let mut crit = Vec::new();
    if deterministic {
        // pure splitting drift of the conserved quantity
        let ratios: Vec<f64> = main.windows(2).map(|w| w[0] / w[1]).collect();
        if mass {
            crit.push(Criterion::le("finest |Q(T) - Q(0)|", main[REFINEMENT_LEVELS - 1], DETERMINISTIC_Q_TOL * ts.first().map_or(1.0, |r: &TimeRow| r.sample.q.abs().max(1.0))));
        } else {
            for (i, r) in ratios.iter().enumerate() {
                crit.push(Criterion::within(format!("E drift ratio level {} / {}", i, i + 1), *r, ORDER2_RATIO.0, ORDER2_RATIO.1));
            }
        }
        details["drift_ratios"] = json!(ratios);
    } else {
        crit.push(Criterion::ge("observed order (RMS over paths)", order(&main), MIN_OBSERVED_ORDER));
        if !mass {
            let published = level_rms(&|r| r.residual_as_published.as_ref().unwrap());
            details["rms_residual_as_published"] = json!(published);
            details["observed_order_as_published"] = json!(order(&published));
            details["energy_identity_form"] = json!("ito-corrected");
        }
    }
    let path_rows = rows.iter().map(|r| serde_json::to_value(r).expect("row serializes")).collect();
    Ok((Verdict::judged(config.experiment, crit, details), ts, path_rows, seeds))
}

fn conservation(config: &RunConfig, s: &Setup) -> Result<PresetResult> {
    if !s.model.is_empty() {
        let path = sample_path(&s.model, config.seed, s.solver.dt, s.solver.n_steps)?;
        let rec = run_direct(&s.u0, &s.v0, &s.params, &s.model, &path, &s.solver)?;
        let q0 = rec.samples[0].q;
        let scale = if q0 != 0.0 { q0.abs() } else { 1.0 };
        let drift = rec.samples.iter().map(|x| (x.q - q0).abs() / scale).fold(0.0, f64::max);
        let crit = vec![
            Criterion::le("relative Q drift", drift, CONSERVATIVE_Q_TOL),
            Criterion::le("blow-up triggered", rec.blew_up() as u8 as f64, 0.0),
        ];
        let details = json!({ "q0": q0, "q_drift": drift, "noise": "Re mu_j = 0" });
        return Ok((Verdict::judged(config.experiment, crit, details), rows_from(&rec), Vec::new(), vec![config.seed]));
    }
    let mut reports = Vec::new();
    let mut rows = Vec::new();
    for cfg in levels(&s.solver) {
        let path = sample_path(&s.model, config.seed, cfg.dt, cfg.n_steps)?;
        let rec = run_direct(&s.u0, &s.v0, &s.params, &s.model, &path, &cfg)?;
        reports.push(deterministic_conservation(&rec)?);
        if reports.len() == 1 {
            rows = rows_from(&rec);
        }
    }
    let mut crit: Vec<Criterion> = reports
        .iter()
        .enumerate()
        .map(|(i, r)| Criterion::le(format!("relative Q drift level {i}"), r.q_drift, DETERMINISTIC_Q_TOL))
        .collect();
    let e: Vec<f64> = reports.iter().map(|r| r.e_drift).collect();
    for i in 0..e.len() - 1 {
        crit.push(Criterion::within(
            format!("E drift ratio level {} / {}", i, i + 1),
            e[i] / e[i + 1],
            ORDER2_RATIO.0,
            ORDER2_RATIO.1,
        ));
    }
    let details = json!({
        "dt": levels(&s.solver).iter().map(|c| c.dt).collect::<Vec<_>>(),
        "q_drift": reports.iter().map(|r| r.q_drift).collect::<Vec<_>>(),
        "e_drift": e,
    });
    Ok((Verdict::judged(config.experiment, crit, details), rows, Vec::new(), vec![config.seed]))
}

fn martingale(config: &RunConfig, s: &Setup, workers: Option<usize>) -> Result<PresetResult> {
    let ens = EnsembleConfig {
        solver: s.solver,
        n_paths: config.n_paths,
        base_seed: config.seed,
        workers,
    };
    let summary = run_ensemble(&s.u0, &s.v0, &s.params, &s.model, &ens)?;
    let q0 = mass_q(&s.u0, &s.v0, s.params.c)?;
    let report = martingale_test(&summary, q0)?;
    let control = martingale_test(&summary.with_injected_drift(INJECTED_DRIFT), q0)?;
    let seeds: Vec<u64> = summary.rows.iter().map(|r| r.seed).collect();
    let path0 = sample_path(&s.model, seeds[0], s.solver.dt, s.solver.n_steps)?;
    let rec = run_direct(&s.u0, &s.v0, &s.params, &s.model, &path0, &s.solver)?;
    let crit = vec![
        Criterion::le("|z| of mean Q(T) - Q(0)", report.z.abs(), crate::ensemble::Z_THRESHOLD),
        Criterion::le("failed paths", summary.n_failed as f64, 0.0),
    ];
    let details = json!({
        "report": report,
        "negative_control": { "injected_drift_rate": INJECTED_DRIFT, "report": control },
        "sup_statistic": sup_statistic(&summary),
        "final_q": summary.final_q,
        "final_e": summary.final_e,
        "n_blowup": summary.n_blowup,
    });
    let rows = summary
        .rows
        .iter()
        .map(|r| serde_json::to_value(r).expect("row serializes"))
        .collect();
    Ok((Verdict::judged(config.experiment, crit, details), rows_from(&rec), rows, seeds))
}

fn single(config: &RunConfig, s: &Setup) -> Result<PresetResult> {
    let path = sample_path(&s.model, config.seed, s.solver.dt, s.solver.n_steps)?;
    let rec = run_direct(&s.u0, &s.v0, &s.params, &s.model, &path, &s.solver)?;
    let details = json!({
        "triggered": rec.blew_up(),
        "blowup": rec.blowup,
        "threshold": rec.threshold,
        "initial_norm": rec.initial_norm,
        "final_step": rec.final_step,
        "norm": s.solver.norm_kind,
    });
    let status = if config.experiment == Experiment::BlowupDemo { "detector" } else { "no-rule" };
    let verdict = Verdict {
        experiment: config.experiment,
        pass: true,
        status,
        criteria: Vec::new(),
        details,
    };
    Ok((verdict, rows_from(&rec), Vec::new(), vec![config.seed]))
}

fn fmt(x: f64) -> String {
    format!("{x}")
}

/// Time series as CSV bytes: fixed header, `.` decimals, `\n` line ends,
/// empty fields for residuals that were not computed.
pub fn timeseries_csv(rows: &[TimeRow]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(CSV_HEADER).map_err(io)?;
    let opt = |x: Option<f64>| x.map(fmt).unwrap_or_default();
    for r in rows {
        let s = &r.sample;
        w.write_record([
            fmt(s.t),
            fmt(s.q),
            fmt(s.e),
            fmt(s.k),
            fmt(s.p),
            fmt(s.l2_u),
            fmt(s.l2_v),
            fmt(s.h1_u),
            fmt(s.h1_v),
            opt(r.mass_residual),
            opt(r.energy_residual),
            opt(r.equivalence_residual),
        ])
        .map_err(io)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.to_string()))
}

pub fn ndjson(rows: &[Value]) -> Vec<u8> {
    let mut out = Vec::new();
    for r in rows {
        out.extend(serde_json::to_vec(r).expect("value serializes"));
        out.push(b'\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
}

pub fn scheme_descriptors() -> Value {
    json!({
        "theta_cutoff": THETA_DESCRIPTION,
        "energy_pairing": ENERGY_DESCRIPTION,
        "stability_factor": DEFAULT_STABILITY_FACTOR,
        "overflow_cap_max_re_w": DEFAULT_OVERFLOW_CAP,
        "direct_scheme": "Strang: half dispersion, pointwise RK4 nonlinear, exact exp(dW - (mu + mu~) dt), half dispersion",
        "rescaled_scheme": "RK4 method of lines, W frozen at stage times (t_k, midpoint average, t_k+1)",
        "ito_quadrature": "left-point sums plus iterated-integral correction 1/2 g_jj' (dB_j dB_j' - delta dt)",
        "energy_identity_form": "ito-corrected",
        "rng": "ChaCha8 keyed by seed, stream = mode, word position = 4 * step; Box-Muller normals; coarse paths by pairwise sums",
        "derived_seed": "splitmix64(base) xor index",
        "refinement_levels": REFINEMENT_LEVELS,
    })
}

/// Writes CSV, NDJSON (when there are per-path rows), verdict and manifest
/// JSON into `dir`; returns the manifest.
pub fn write_outputs(outcome: &ExperimentOutcome, dir: &Path) -> Result<Value> {
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let mut put = |name: &str, bytes: Vec<u8>| -> Result<()> {
        let p: PathBuf = dir.join(name);
        std::fs::write(&p, &bytes)?;
        files.push(FileEntry {
            name: name.to_string(),
            sha256: hex::encode(Sha256::digest(&bytes)),
            bytes: bytes.len(),
        });
        Ok(())
    };
    put("timeseries.csv", timeseries_csv(&outcome.timeseries)?)?;
    if !outcome.path_rows.is_empty() {
        put("paths.ndjson", ndjson(&outcome.path_rows))?;
    }
    let mut verdict = serde_json::to_vec_pretty(&outcome.verdict)?;
    verdict.push(b'\n');
    put("verdict.json", verdict)?;
    let manifest = json!({
        "artifact": "snls",
        "version": env!("CARGO_PKG_VERSION"),
        "experiment": outcome.config.experiment,
        "config_hash": outcome.config.hash(),
        "config": outcome.config,
        "seeds": outcome.seeds,
        "scheme": scheme_descriptors(),
        "files": files,
        "timings": { "run_seconds": outcome.elapsed_seconds },
    });
    let mut bytes = serde_json::to_vec_pretty(&manifest)?;
    bytes.push(b'\n');
    std::fs::write(dir.join("manifest.json"), bytes)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Overrides;

    fn cfg(text: &str) -> RunConfig {
        RunConfig::from_toml_str(text, &Overrides::default()).unwrap()
    }

    #[test]
    fn csv_format_contract() {
        let c = cfg("[solver]\ndt = 0.01\nt_final = 0.02\n");
        let o = run_experiment(&c, Some(1)).unwrap();
        let bytes = timeseries_csv(&o.timeseries).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        let mut lines = text.split('\n');
        assert_eq!(
            lines.next().unwrap(),
            "t,Q,E,K,P,l2_u,l2_v,h1_u,h1_v,mass_residual,energy_residual,equivalence_residual"
        );
        let first = lines.next().unwrap();
        assert!(first.starts_with("0,"));
        assert!(first.ends_with(",,,"));
        assert!(!text.contains('\r'));
        assert!(text.ends_with('\n'));
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn blowup_demo_below_initial_norm_stops_at_zero() {
        let c = cfg("experiment = \"blowup-demo\"\n[solver]\ndt = 0.01\nt_final = 0.1\nblowup_threshold = 1e-3\n");
        let o = run_experiment(&c, Some(1)).unwrap();
        assert!(o.verdict.pass);
        assert_eq!(o.verdict.status, "detector");
        assert_eq!(o.verdict.details["blowup"]["step"], 0);
        assert_eq!(o.exit_status(), ExitStatus::Pass);
    }

    #[test]
    fn deterministic_conservation_preset_passes() {
        let c = cfg("experiment = \"conservation\"\n[solver]\ndt = 2e-3\nt_final = 0.2\nrecord_every = 10\n");
        let o = run_experiment(&c, Some(1)).unwrap();
        assert!(o.verdict.pass, "{:#?}", o.verdict);
    }

    #[test]
    fn error_exit_codes() {
        assert_eq!(ExitStatus::for_error(&Error::Config(vec![])).code(), 2);
        assert_eq!(ExitStatus::for_error(&Error::AmplitudeOverflow { max_re_w: 60.0, cap: 50.0 }).code(), 3);
        assert_eq!(ExitStatus::for_error(&Error::NonFinite { step: 3 }).code(), 3);
    }

    #[test]
    fn outputs_are_listed_with_hashes() {
        let dir = tempfile::tempdir().unwrap();
        let c = cfg("[solver]\ndt = 0.01\nt_final = 0.02\n");
        let o = run_experiment(&c, Some(1)).unwrap();
        let m = write_outputs(&o, dir.path()).unwrap();
        let files = m["files"].as_array().unwrap();
        assert_eq!(files.len(), 2);
        for f in files {
            let bytes = std::fs::read(dir.path().join(f["name"].as_str().unwrap())).unwrap();
            assert_eq!(f["sha256"], hex::encode(Sha256::digest(&bytes)));
        }
    }
}
