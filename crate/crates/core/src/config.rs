//! Run configuration: TOML parsing, defaults and validation.
//!
//! ```toml
//! experiment = "mass-identity"   # equivalence | mass-identity | energy-identity |
//!                                # conservation | martingale | blowup-demo | custom
//! seed = 7
//! n_paths = 32
//! output_dir = "out"
//!
//! [grid]
//! dim = 1
//! n = 64
//! box_length = 16.0
//!
//! [params]
//! ell = 1.0
//! L = 0.5
//! kappa = 1.0            # real, or [re, im]
//! c = 2.0
//! lambda = 2.0           # defaults to c * conj(kappa)
//!
//! [[noise.modes]]
//! mu = [1.0, 0.0]
//! shape = "cosine"       # or "gaussian" with center = [..], width = w
//! wavenumber = [1]
//!
//! [solver]
//! dt = 2e-3
//! t_final = 0.5
//! record_every = 10
//! blowup_threshold = 1e3 # absolute; default 1e3 x initial norm
//! norm = "l2"            # or "h1"
//!
//! [[initial.u]]
//! amplitude = [1.0, 0.3]
//! center = [8.0]
//! width = 1.0
//! phase = [0]            # integer modes of exp(2 pi i n.x / box_length)
//! ```

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use toml::Value;

use crate::error::{Error, Result};
use crate::grid::{ComplexField, Grid, GridSpec};
use crate::noise::{ModeShape, NoiseMode, NoiseModel};
use crate::params::SystemParams;
use crate::rescaled::{stability_bound, DEFAULT_STABILITY_FACTOR};
use crate::solver::{NormKind, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Equivalence,
    MassIdentity,
    EnergyIdentity,
    Conservation,
    Martingale,
    BlowupDemo,
    Custom,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::Equivalence,
        Experiment::MassIdentity,
        Experiment::EnergyIdentity,
        Experiment::Conservation,
        Experiment::Martingale,
        Experiment::BlowupDemo,
        Experiment::Custom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Equivalence => "equivalence",
            Experiment::MassIdentity => "mass-identity",
            Experiment::EnergyIdentity => "energy-identity",
            Experiment::Conservation => "conservation",
            Experiment::Martingale => "martingale",
            Experiment::BlowupDemo => "blowup-demo",
            Experiment::Custom => "custom",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == s)
    }

    pub fn default_paths(self) -> usize {
        match self {
            Experiment::MassIdentity | Experiment::EnergyIdentity => 32,
            Experiment::Martingale => 256,
            _ => 1,
        }
    }

    fn requires_compat(self) -> bool {
        matches!(
            self,
            Experiment::MassIdentity | Experiment::EnergyIdentity | Experiment::Conservation | Experiment::Martingale
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianBump {
    pub amplitude: Complex64,
    pub center: Vec<f64>,
    pub width: f64,
    pub phase: Vec<i64>,
}

impl GaussianBump {
    fn eval(&self, x: &[f64; 3], box_length: f64) -> Complex64 {
        let mut r2 = 0.0;
        let mut arg = 0.0;
        for (a, c) in self.center.iter().enumerate() {
            r2 += (x[a] - c).powi(2);
            arg += 2.0 * std::f64::consts::PI * self.phase[a] as f64 * x[a] / box_length;
        }
        self.amplitude * (-r2 / (2.0 * self.width * self.width)).exp() * Complex64::from_polar(1.0, arg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSpec {
    pub mu: Complex64,
    #[serde(flatten)]
    pub shape: ModeShape,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSpec {
    pub dt: f64,
    pub t_final: f64,
    pub record_every: usize,
    pub blowup_threshold: Option<f64>,
    pub norm: NormKind,
}

/// Fully resolved configuration; every field has been defaulted and checked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub n_paths: usize,
    pub output_dir: String,
    pub grid: GridSpec,
    pub params: SystemParams,
    pub noise: Vec<ModeSpec>,
    pub solver: SolverSpec,
    pub initial_u: Vec<GaussianBump>,
    pub initial_v: Vec<GaussianBump>,
}

/// Command-line overrides applied before validation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output_dir: Option<String>,
    pub n_paths: Option<usize>,
    pub dt: Option<f64>,
}

struct Reader {
    errors: Vec<String>,
}

impl Reader {
    fn unknown(&mut self, table: &toml::Table, section: &str, allowed: &[&str]) {
        for k in table.keys() {
            if !allowed.contains(&k.as_str()) {
                self.errors.push(format!("{section}: unknown key '{k}'"));
            }
        }
    }

    fn float(&mut self, table: &toml::Table, section: &str, key: &str, default: Option<f64>) -> Option<f64> {
        match table.get(key) {
            None => {
                if default.is_none() {
                    self.errors.push(format!("{section}.{key}: missing"));
                }
                default
            }
            Some(Value::Float(x)) => Some(*x),
            Some(Value::Integer(i)) => Some(*i as f64),
            Some(v) => {
                self.errors.push(format!("{section}.{key}: expected a number, got {}", v.type_str()));
                None
            }
        }
    }

    fn int(&mut self, table: &toml::Table, section: &str, key: &str, default: Option<i64>) -> Option<i64> {
        match table.get(key) {
            None => {
                if default.is_none() {
                    self.errors.push(format!("{section}.{key}: missing"));
                }
                default
            }
            Some(Value::Integer(i)) => Some(*i),
            Some(v) => {
                self.errors.push(format!("{section}.{key}: expected an integer, got {}", v.type_str()));
                None
            }
        }
    }

    fn string(&mut self, table: &toml::Table, section: &str, key: &str, default: &str) -> Option<String> {
        match table.get(key) {
            None => Some(default.to_string()),
            Some(Value::String(s)) => Some(s.clone()),
            Some(v) => {
                self.errors.push(format!("{section}.{key}: expected a string, got {}", v.type_str()));
                None
            }
        }
    }

    fn number(v: &Value) -> Option<f64> {
        match v {
            Value::Float(x) => Some(*x),
            Value::Integer(i) => Some(*i as f64),
            _ => None,
        }
    }

    /// A real number or a two-element `[re, im]` array.
    fn complex(&mut self, table: &toml::Table, section: &str, key: &str, default: Option<Complex64>) -> Option<Complex64> {
        let v = match table.get(key) {
            None => {
                if default.is_none() {
                    self.errors.push(format!("{section}.{key}: missing"));
                }
                return default;
            }
            Some(v) => v,
        };
        if let Some(x) = Self::number(v) {
            return Some(Complex64::new(x, 0.0));
        }
        if let Value::Array(a) = v {
            if let [re, im] = a.as_slice() {
                if let (Some(re), Some(im)) = (Self::number(re), Self::number(im)) {
                    return Some(Complex64::new(re, im));
                }
            }
        }
        self.errors.push(format!("{section}.{key}: expected a number or [re, im]"));
        None
    }

    fn float_list(&mut self, table: &toml::Table, section: &str, key: &str) -> Option<Vec<f64>> {
        match table.get(key) {
            Some(Value::Array(a)) => {
                let v: Option<Vec<f64>> = a.iter().map(Self::number).collect();
                if v.is_none() {
                    self.errors.push(format!("{section}.{key}: expected an array of numbers"));
                }
                v
            }
            None => None,
            Some(_) => {
                self.errors.push(format!("{section}.{key}: expected an array of numbers"));
                None
            }
        }
    }

    fn int_list(&mut self, table: &toml::Table, section: &str, key: &str) -> Option<Vec<i64>> {
        match table.get(key) {
            Some(Value::Array(a)) => {
                let v: Option<Vec<i64>> = a.iter().map(|x| x.as_integer()).collect();
                if v.is_none() {
                    self.errors.push(format!("{section}.{key}: expected an array of integers"));
                }
                v
            }
            None => None,
            Some(_) => {
                self.errors.push(format!("{section}.{key}: expected an array of integers"));
                None
            }
        }
    }

    fn table<'a>(&mut self, root: &'a toml::Table, key: &str) -> Option<&'a toml::Table> {
        match root.get(key) {
            None => None,
            Some(Value::Table(t)) => Some(t),
            Some(v) => {
                self.errors.push(format!("{key}: expected a table, got {}", v.type_str()));
                None
            }
        }
    }

    fn table_array<'a>(&mut self, root: &'a toml::Table, section: &str, key: &str) -> Vec<&'a toml::Table> {
        match root.get(key) {
            None => Vec::new(),
            Some(Value::Array(a)) => a
                .iter()
                .enumerate()
                .filter_map(|(i, v)| match v {
                    Value::Table(t) => Some(t),
                    _ => {
                        self.errors.push(format!("{section}.{key}[{i}]: expected a table"));
                        None
                    }
                })
                .collect(),
            Some(_) => {
                self.errors.push(format!("{section}.{key}: expected an array of tables"));
                Vec::new()
            }
        }
    }
}

fn vec_or(v: Option<Vec<f64>>, dim: usize, fill: f64) -> Vec<f64> {
    v.unwrap_or_else(|| vec![fill; dim])
}

impl RunConfig {
    pub fn from_file(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(vec![format!("cannot read {}: {e}", path.display())]))?;
        Self::from_toml_str(&text, overrides)
    }

    /// Parses, fills defaults, applies `overrides` and validates. All problems
    /// are collected into one [`Error::Config`].
    pub fn from_toml_str(text: &str, overrides: &Overrides) -> Result<Self> {
        let empty = toml::Table::new();
        let root: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(vec![format!("TOML syntax: {}", e.message())]))?;
        let mut r = Reader { errors: Vec::new() };
        r.unknown(
            &root,
            "top level",
            &["experiment", "seed", "n_paths", "output_dir", "grid", "params", "noise", "solver", "initial"],
        );

        let experiment = match r.string(&root, "top level", "experiment", "custom") {
            Some(s) => Experiment::parse(&s).or_else(|| {
                let names: Vec<_> = Experiment::ALL.iter().map(|e| e.name()).collect();
                r.errors.push(format!("experiment: '{s}' is not one of {}", names.join(", ")));
                None
            }),
            None => None,
        };
        let seed = r.int(&root, "top level", "seed", Some(0)).and_then(|s| {
            u64::try_from(s).ok().or_else(|| {
                r.errors.push(format!("seed: must be non-negative (got {s})"));
                None
            })
        });
        let n_paths = r.int(&root, "top level", "n_paths", Some(0));
        let output_dir = r.string(&root, "top level", "output_dir", "out");

        let g = r.table(&root, "grid").unwrap_or(&empty);
        r.unknown(g, "grid", &["dim", "n", "box_length"]);
        let dim = r.int(g, "grid", "dim", Some(1));
        let n = r.int(g, "grid", "n", Some(64));
        let box_length = r.float(g, "grid", "box_length", Some(16.0));
        let grid = match (dim, n, box_length) {
            (Some(d), Some(n), Some(l)) if d > 0 && n > 0 => GridSpec::new(d as usize, n as usize, l)
                .map_err(|e| r.errors.push(format!("grid: {e}")))
                .ok(),
            (Some(_), Some(_), Some(_)) => {
                r.errors.push("grid: dim and n must be positive".into());
                None
            }
            _ => None,
        };
        let d = grid.map(|g| g.dim).unwrap_or(1);
        let box_len = grid.map(|g| g.box_length).unwrap_or(16.0);

        let p = r.table(&root, "params").unwrap_or(&empty);
        r.unknown(p, "params", &["ell", "L", "lambda", "kappa", "c"]);
        let ell = r.float(p, "params", "ell", Some(1.0));
        let big_l = r.float(p, "params", "L", Some(0.5));
        let kappa = r.complex(p, "params", "kappa", Some(Complex64::new(1.0, 0.0)));
        let c = r.float(p, "params", "c", Some(2.0));
        let lambda = match (kappa, c) {
            (Some(k), Some(c)) => r.complex(p, "params", "lambda", Some(k.conj() * c)),
            _ => r.complex(p, "params", "lambda", Some(Complex64::new(0.0, 0.0))),
        };

        let mut noise = Vec::new();
        if let Some(nz) = r.table(&root, "noise") {
            r.unknown(nz, "noise", &["modes"]);
            for (i, m) in r.table_array(nz, "noise", "modes").into_iter().enumerate() {
                let sec = format!("noise.modes[{i}]");
                r.unknown(m, &sec, &["mu", "shape", "wavenumber", "center", "width"]);
                let mu = r.complex(m, &sec, "mu", None);
                let shape = match r.string(m, &sec, "shape", "cosine").as_deref() {
                    Some("cosine") => Some(ModeShape::Cosine {
                        wavenumber: r.int_list(m, &sec, "wavenumber").unwrap_or_else(|| vec![0; d]),
                    }),
                    Some("gaussian") => {
                        let center = vec_or(r.float_list(m, &sec, "center"), d, 0.5 * box_len);
                        let width = r.float(m, &sec, "width", Some(1.0));
                        width.map(|width| ModeShape::Gaussian { center, width })
                    }
                    Some(other) => {
                        r.errors.push(format!("{sec}.shape: '{other}' is not cosine or gaussian"));
                        None
                    }
                    None => None,
                };
                if let (Some(mu), Some(shape)) = (mu, shape) {
                    noise.push(ModeSpec { mu, shape });
                }
            }
        }

        let s = r.table(&root, "solver").unwrap_or(&empty);
        r.unknown(s, "solver", &["dt", "t_final", "record_every", "blowup_threshold", "norm"]);
        let dt = r.float(s, "solver", "dt", Some(1e-3));
        let t_final = r.float(s, "solver", "t_final", Some(0.1));
        let record_every = r.int(s, "solver", "record_every", Some(1));
        let threshold = match s.get("blowup_threshold") {
            None => None,
            Some(_) => r.float(s, "solver", "blowup_threshold", None),
        };
        let norm = match r.string(s, "solver", "norm", "l2").as_deref() {
            Some("l2") => Some(NormKind::L2),
            Some("h1") => Some(NormKind::H1),
            Some(o) => {
                r.errors.push(format!("solver.norm: '{o}' is not l2 or h1"));
                None
            }
            None => None,
        };

        let bumps = |key: &str, default_amp: f64, r: &mut Reader| -> Vec<GaussianBump> {
            let init = match root.get("initial") {
                Some(Value::Table(t)) => t,
                _ => &empty,
            };
            let list = r.table_array(init, "initial", key);
            if list.is_empty() && !init.contains_key(key) {
                return vec![GaussianBump {
                    amplitude: Complex64::new(default_amp, 0.0),
                    center: vec![0.5 * box_len; d],
                    width: 1.0,
                    phase: vec![0; d],
                }];
            }
            let mut out = Vec::new();
            for (i, b) in list.into_iter().enumerate() {
                let sec = format!("initial.{key}[{i}]");
                r.unknown(b, &sec, &["amplitude", "center", "width", "phase"]);
                let amplitude = r.complex(b, &sec, "amplitude", Some(Complex64::new(1.0, 0.0)));
                let center = vec_or(r.float_list(b, &sec, "center"), d, 0.5 * box_len);
                let width = r.float(b, &sec, "width", Some(1.0));
                let phase = r.int_list(b, &sec, "phase").unwrap_or_else(|| vec![0; d]);
                if center.len() != d || phase.len() != d {
                    r.errors.push(format!("{sec}: center and phase need {d} entries"));
                }
                if let (Some(amplitude), Some(width)) = (amplitude, width) {
                    if !(width > 0.0) {
                        r.errors.push(format!("{sec}.width: must be positive (got {width})"));
                    }
                    out.push(GaussianBump {
                        amplitude,
                        center,
                        width,
                        phase,
                    });
                }
            }
            out
        };
        if let Some(Value::Table(init)) = root.get("initial") {
            r.unknown(init, "initial", &["u", "v"]);
        } else if root.contains_key("initial") {
            r.errors.push("initial: expected a table".into());
        }
        let initial_u = bumps("u", 1.0, &mut r);
        let initial_v = bumps("v", 0.5, &mut r);

        let mut errors = r.errors;
        let (
            Some(experiment),
            Some(seed),
            Some(n_paths),
            Some(output_dir),
            Some(grid),
            Some(ell),
            Some(big_l),
            Some(kappa),
            Some(c),
            Some(lambda),
            Some(dt),
            Some(t_final),
            Some(record_every),
            Some(norm),
        ) = (
            experiment, seed, n_paths, output_dir, grid, ell, big_l, kappa, c, lambda, dt, t_final, record_every,
            norm,
        )
        else {
            return Err(Error::Config(errors));
        };
        if n_paths < 0 {
            errors.push(format!("n_paths: must be non-negative (got {n_paths})"));
        }
        if record_every < 1 {
            errors.push(format!("solver.record_every: must be >= 1 (got {record_every})"));
        }
        let mut cfg = RunConfig {
            experiment,
            seed,
            n_paths: if n_paths > 0 { n_paths as usize } else { experiment.default_paths() },
            output_dir,
            grid,
            params: SystemParams::new(ell, big_l, lambda, kappa, c),
            noise,
            solver: SolverSpec {
                dt,
                t_final,
                record_every: record_every.max(1) as usize,
                blowup_threshold: threshold,
                norm,
            },
            initial_u,
            initial_v,
        };
        if let Some(s) = overrides.seed {
            cfg.seed = s;
        }
        if let Some(o) = &overrides.output_dir {
            cfg.output_dir = o.clone();
        }
        if let Some(n) = overrides.n_paths {
            cfg.n_paths = n;
        }
        if let Some(dt) = overrides.dt {
            cfg.solver.dt = dt;
        }
        errors.extend(cfg.violations());
        if errors.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::Config(errors))
        }
    }

    /// Every constraint the resolved configuration breaks.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let d = self.grid.dim;
        if let Err(v) = self.params.validate(self.experiment.requires_compat()) {
            for x in v {
                let what = if x.constraint == "lambda = c conj(kappa)" {
                    format!("compatibility condition {} required by experiment '{}'", x.constraint, self.experiment.name())
                } else {
                    x.constraint.to_string()
                };
                out.push(format!("params: {what}: {}", x.detail));
            }
        }
        if self.n_paths == 0 {
            out.push("n_paths: must be >= 1".into());
        }
        for (i, m) in self.noise.iter().enumerate() {
            let ok = match &m.shape {
                ModeShape::Cosine { wavenumber } => wavenumber.len() == d,
                ModeShape::Gaussian { center, width } => center.len() == d && *width > 0.0,
            };
            if !ok {
                out.push(format!("noise.modes[{i}]: needs {d}-dimensional wavenumber/center and a positive width"));
            }
            if !(m.mu.re.is_finite() && m.mu.im.is_finite()) {
                out.push(format!("noise.modes[{i}].mu: must be finite"));
            }
        }
        match SolverConfig::new(self.solver.dt, self.solver.t_final) {
            Err(e) => out.push(format!("solver: {e}")),
            Ok(_) => {
                if let Some(t) = self.solver.blowup_threshold {
                    if !(t > 0.0) {
                        out.push(format!("solver.blowup_threshold: must be positive (got {t})"));
                    }
                }
            }
        }
        if self.experiment == Experiment::Equivalence && self.params.validate(false).is_ok() {
            let bound = stability_bound(&self.grid, &self.params, DEFAULT_STABILITY_FACTOR);
            if self.solver.dt > bound {
                out.push(format!(
                    "solver.dt = {} exceeds the rescaled-solver stability bound {bound:.6e} = {} / (max|k|^2 * max(1/2ell, 1/2L))",
                    self.solver.dt, DEFAULT_STABILITY_FACTOR
                ));
            }
        }
        if self.experiment == Experiment::Conservation && self.noise.iter().any(|m| m.mu.re != 0.0) {
            out.push("noise: experiment 'conservation' needs Re mu_j = 0 for every mode".into());
        }
        if self.experiment == Experiment::Martingale && self.noise.is_empty() {
            out.push("noise: experiment 'martingale' needs at least one noise mode".into());
        }
        for (name, list) in [("u", &self.initial_u), ("v", &self.initial_v)] {
            for (i, b) in list.iter().enumerate() {
                if b.center.len() != d || b.phase.len() != d {
                    out.push(format!("initial.{name}[{i}]: center and phase need {d} entries"));
                }
            }
        }
        let mut seen = BTreeSet::new();
        out.retain(|e| seen.insert(e.clone()));
        out
    }

    pub fn grid(&self) -> Result<Arc<Grid>> {
        Grid::new(self.grid)
    }

    pub fn noise_model(&self, grid: &Arc<Grid>) -> Result<NoiseModel> {
        let modes = self
            .noise
            .iter()
            .map(|m| NoiseMode::new(grid, m.mu, m.shape.clone()))
            .collect::<Result<Vec<_>>>()?;
        NoiseModel::new(grid, modes)
    }

    pub fn initial_data(&self, grid: &Arc<Grid>) -> (ComplexField, ComplexField) {
        let l = self.grid.box_length;
        let build = |list: &[GaussianBump]| {
            ComplexField::from_fn(grid, |x| list.iter().map(|b| b.eval(x, l)).sum())
        };
        (build(&self.initial_u), build(&self.initial_v))
    }

    pub fn solver_config(&self) -> Result<SolverConfig> {
        let mut s = SolverConfig::new(self.solver.dt, self.solver.t_final)?
            .with_record_every(self.solver.record_every)
            .with_norm(self.solver.norm);
        s.blowup_threshold = self.solver.blowup_threshold;
        Ok(s)
    }

    /// SHA-256 of the canonical JSON form of the resolved configuration.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<RunConfig> {
        RunConfig::from_toml_str(s, &Overrides::default())
    }

    fn errors(s: &str) -> Vec<String> {
        match parse(s).unwrap_err() {
            Error::Config(v) => v,
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn empty_file_gets_defaults() {
        let c = parse("").unwrap();
        assert_eq!(c.experiment, Experiment::Custom);
        assert_eq!(c.grid, GridSpec::new(1, 64, 16.0).unwrap());
        assert!(c.params.validate(true).is_ok());
        assert_eq!(c.n_paths, 1);
        assert!(c.noise.is_empty());
        assert_eq!(c.initial_u.len(), 1);
    }

    #[test]
    fn full_file_round_trip() {
        let c = parse(
            r#"
            experiment = "mass-identity"
            seed = 9
            [grid]
            n = 32
            box_length = 10
            [params]
            ell = 1.0
            L = 0.5
            kappa = [0.5, -1.0]
            c = 2.0
            [[noise.modes]]
            mu = [1.0, 0.0]
            wavenumber = [1]
            [[noise.modes]]
            mu = 0.2
            shape = "gaussian"
            center = [3.0]
            width = 0.5
            [solver]
            dt = 2e-3
            t_final = 0.5
            record_every = 25
            norm = "h1"
            [[initial.u]]
            amplitude = [1.0, 0.5]
            center = [5.0]
            phase = [2]
            "#,
        )
        .unwrap();
        assert_eq!(c.experiment, Experiment::MassIdentity);
        assert_eq!(c.n_paths, 32);
        assert_eq!(c.noise.len(), 2);
        assert_eq!(c.params.lambda, Complex64::new(1.0, 2.0));
        assert_eq!(c.solver.norm, NormKind::H1);
        let g = c.grid().unwrap();
        let m = c.noise_model(&g).unwrap();
        assert_eq!(m.len(), 2);
        let (u, _) = c.initial_data(&g);
        assert!((u.max_abs() - Complex64::new(1.0, 0.5).norm()).abs() < 1e-12);
        assert_eq!(c.hash(), c.clone().hash());
    }

    #[test]
    fn all_violations_collected() {
        let e = errors(
            r#"
            experiment = "nope"
            bogus = 1
            [grid]
            n = 30
            [solver]
            dt = "big"
            [[noise.modes]]
            shape = "square"
            "#,
        );
        let joined = e.join("\n");
        assert!(joined.contains("experiment"), "{joined}");
        assert!(joined.contains("bogus"));
        assert!(joined.contains("power of two") || joined.contains("grid"));
        assert!(joined.contains("solver.dt"));
        assert!(joined.contains("noise.modes[0].mu: missing"));
        assert!(joined.contains("square"));
    }

    #[test]
    fn compatibility_gate_for_mass_identity() {
        let text = r#"
            experiment = "mass-identity"
            [params]
            lambda = 1.0
            kappa = 1.0
            c = 2.0
            [[noise.modes]]
            mu = 1.0
            wavenumber = [1]
        "#;
        let e = errors(text).join("\n");
        assert!(e.contains("compatibility condition lambda = c conj(kappa)"), "{e}");
        // the same parameters are fine for a custom run
        assert!(parse(&text.replace("mass-identity", "custom")).is_ok());
    }

    #[test]
    fn stability_gate_for_equivalence() {
        let e = errors(
            r#"
            experiment = "equivalence"
            [solver]
            dt = 0.01
            t_final = 0.1
            "#,
        )
        .join("\n");
        assert!(e.contains("stability bound"), "{e}");
        assert!(e.contains("3.16"), "{e}");
    }

    #[test]
    fn overrides_apply_before_validation() {
        let o = Overrides {
            seed: Some(5),
            output_dir: Some("x".into()),
            n_paths: Some(3),
            dt: Some(5e-4),
        };
        let c = RunConfig::from_toml_str("experiment = \"custom\"", &o).unwrap();
        assert_eq!((c.seed, c.n_paths, c.output_dir.as_str(), c.solver.dt), (5, 3, "x", 5e-4));
        let bad = Overrides {
            dt: Some(0.03),
            ..Default::default()
        };
        assert!(RunConfig::from_toml_str("", &bad).is_err());
    }

    #[test]
    fn conservation_rejects_real_noise() {
        let e = errors(
            r#"
            experiment = "conservation"
            [[noise.modes]]
            mu = [0.5, 1.0]
            wavenumber = [1]
            "#,
        )
        .join("\n");
        assert!(e.contains("Re mu_j = 0"));
    }
}
