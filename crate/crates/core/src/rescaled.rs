//! Method-of-lines RK4 integrator for the rescaled random PDE in `(y, z)`,
//! where `u = e^W y`, `v = e^W z`:
//!
//! ```text
//! y' = A_l(t) y - i lambda conj(e^W) z conj(y)
//! z' = A_L(t) z - i kappa e^W y^2
//! A_m y = -i/(2m) e^{-W} lap(e^W y) - (mu + mu~) y
//! ```
//!
//! `W` is frozen at each RK stage time: `W(t_k)`, the average of `W(t_k)` and
//! `W(t_{k+1})`, and `W(t_{k+1})`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{gradient, laplacian, ComplexField, GridSpec};
use crate::noise::{BrownianPath, NoiseModel};
use crate::params::SystemParams;
use crate::record::{Provenance, SolverKind, TrajectoryRecord};
use crate::solver::{Recorder, SolverConfig};

const I: Complex64 = Complex64::new(0.0, 1.0);

pub const DEFAULT_STABILITY_FACTOR: f64 = 0.5;
pub const DEFAULT_OVERFLOW_CAP: f64 = 50.0;

#[derive(Debug, Clone, PartialEq)]
pub struct RescaledState {
    pub y: ComplexField,
    pub z: ComplexField,
    pub t: f64,
}

impl RescaledState {
    pub fn new(y: ComplexField, z: ComplexField, t: f64) -> Result<Self> {
        y.check_same_grid(&z)?;
        Ok(RescaledState { y, z, t })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RescaledOptions {
    pub stability_factor: f64,
    /// Largest admissible `max Re W`.
    pub overflow_cap: f64,
}

impl Default for RescaledOptions {
    fn default() -> Self {
        RescaledOptions {
            stability_factor: DEFAULT_STABILITY_FACTOR,
            overflow_cap: DEFAULT_OVERFLOW_CAP,
        }
    }
}

/// `factor / (max|k|^2 * max(1/2l, 1/2L))`, with `max|k|^2 = d (pi N / L_box)^2`.
pub fn stability_bound(spec: &GridSpec, params: &SystemParams, factor: f64) -> f64 {
    let rate = (0.5 / params.ell).max(0.5 / params.big_l);
    factor / (spec.max_k_squared() * rate)
}

fn check_overflow(w: &ComplexField, cap: f64) -> Result<()> {
    let m = w.max_re();
    if !(m <= cap) {
        return Err(Error::AmplitudeOverflow { max_re_w: m, cap });
    }
    Ok(())
}

fn check_fields(fields: &[&ComplexField]) -> Result<()> {
    for f in &fields[1..] {
        fields[0].check_same_grid(f)?;
    }
    Ok(())
}

fn a_conjugated(
    y: &ComplexField,
    ew: &ComplexField,
    emw: &ComplexField,
    mass: f64,
    damp: &ComplexField,
) -> ComplexField {
    let lap = laplacian(&ew.mul(y));
    let s = -I / (2.0 * mass);
    let mut out = emw.mul(&lap);
    for ((o, d), yv) in out.values_mut().iter_mut().zip(damp.values()).zip(y.values()) {
        *o = s * *o - d * yv;
    }
    out
}

/// Conjugated-Laplacian form of `A_m y`, with the default overflow cap.
pub fn apply_a(
    y: &ComplexField,
    w: &ComplexField,
    mass: f64,
    mu: &ComplexField,
    mu_tilde: &ComplexField,
) -> Result<ComplexField> {
    apply_a_capped(y, w, mass, mu, mu_tilde, DEFAULT_OVERFLOW_CAP)
}

pub fn apply_a_capped(
    y: &ComplexField,
    w: &ComplexField,
    mass: f64,
    mu: &ComplexField,
    mu_tilde: &ComplexField,
    cap: f64,
) -> Result<ComplexField> {
    check_fields(&[y, w, mu, mu_tilde])?;
    check_overflow(w, cap)?;
    let ew = w.map(|z| z.exp());
    let emw = w.map(|z| (-z).exp());
    Ok(a_conjugated(y, &ew, &emw, mass, &mu.add(mu_tilde)))
}

/// Coefficients of the expanded form `A_m y = -i((1/2m) lap y + b . grad y + c y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorCoefficients {
    pub mass: f64,
    /// `b = grad W / m`, one field per axis.
    pub b: Vec<ComplexField>,
    /// `c = (1/2m) sum_j (d_j W)^2 + (1/2m) lap W - i(mu + mu~)`.
    pub c: ComplexField,
}

impl OperatorCoefficients {
    pub fn apply(&self, y: &ComplexField) -> Result<ComplexField> {
        y.check_same_grid(&self.c)?;
        let mut acc = laplacian(y).scale(Complex64::from(0.5 / self.mass));
        for (bj, gj) in self.b.iter().zip(gradient(y)) {
            acc = acc.add(&bj.mul(&gj));
        }
        acc = acc.add(&self.c.mul(y));
        Ok(acc.scale(-I))
    }
}

pub fn materialize_coefficients(
    w: &ComplexField,
    mass: f64,
    mu: &ComplexField,
    mu_tilde: &ComplexField,
) -> Result<OperatorCoefficients> {
    check_fields(&[w, mu, mu_tilde])?;
    if !(mass > 0.0) {
        return Err(Error::InvalidArgument(format!("mass must be positive (got {mass})")));
    }
    let grad = gradient(w);
    let inv = 1.0 / mass;
    let b: Vec<ComplexField> = grad.iter().map(|g| g.scale(Complex64::from(inv))).collect();
    let mut c = laplacian(w);
    for g in &grad {
        c = c.add(&g.mul(g));
    }
    let c = c
        .scale(Complex64::from(0.5 * inv))
        .sub(&mu.add(mu_tilde).scale(I));
    Ok(OperatorCoefficients { mass, b, c })
}

/// Expanded `(b, c)` route to `A_m y`.
pub fn apply_a_expanded(
    y: &ComplexField,
    w: &ComplexField,
    mass: f64,
    mu: &ComplexField,
    mu_tilde: &ComplexField,
) -> Result<ComplexField> {
    materialize_coefficients(w, mass, mu, mu_tilde)?.apply(y)
}

/// Per-step operator data; `W`-dependent factors are rebuilt per stage.
struct Rhs {
    params: SystemParams,
    damp: ComplexField,
}

impl Rhs {
    fn eval(&self, y: &ComplexField, z: &ComplexField, ew: &ComplexField, emw: &ComplexField) -> (ComplexField, ComplexField) {
        let mut dy = a_conjugated(y, ew, emw, self.params.ell, &self.damp);
        let mut dz = a_conjugated(z, ew, emw, self.params.big_l, &self.damp);
        let (lambda, kappa) = (self.params.lambda, self.params.kappa);
        for i in 0..dy.len() {
            let (yv, zv, e) = (y.values()[i], z.values()[i], ew.values()[i]);
            dy.values_mut()[i] += -I * lambda * e.conj() * zv * yv.conj();
            dz.values_mut()[i] += -I * kappa * e * yv * yv;
        }
        (dy, dz)
    }
}

/// Right-hand side of the rescaled system at frozen `W`.
pub fn rhs_rsnlss(
    state: &RescaledState,
    params: &SystemParams,
    model: &NoiseModel,
    w: &ComplexField,
) -> Result<(ComplexField, ComplexField)> {
    rhs_rsnlss_capped(state, params, model, w, DEFAULT_OVERFLOW_CAP)
}

pub fn rhs_rsnlss_capped(
    state: &RescaledState,
    params: &SystemParams,
    model: &NoiseModel,
    w: &ComplexField,
    cap: f64,
) -> Result<(ComplexField, ComplexField)> {
    let mu = model.mu_field();
    check_fields(&[&state.y, &state.z, w, &mu])?;
    check_overflow(w, cap)?;
    let rhs = Rhs {
        params: *params,
        damp: mu.add(&model.mu_tilde_field()),
    };
    let ew = w.map(|z| z.exp());
    let emw = w.map(|z| (-z).exp());
    Ok(rhs.eval(&state.y, &state.z, &ew, &emw))
}

fn axpy(base: &ComplexField, h: f64, d: &ComplexField) -> ComplexField {
    base.zip_map(d, |a, b| a + h * b)
}

/// Integrates the rescaled system and records the physical fields `e^W (y, z)`.
/// Since `W(0) = 0` the initial data are `(u0, v0)` themselves.
pub fn run_rescaled(
    u0: &ComplexField,
    v0: &ComplexField,
    params: &SystemParams,
    model: &NoiseModel,
    path: &BrownianPath,
    config: &SolverConfig,
    options: &RescaledOptions,
) -> Result<TrajectoryRecord> {
    config.validate()?;
    config.check_path_dt(path.dt, path.n_steps)?;
    params
        .validate(false)
        .map_err(|v| Error::Config(v.iter().map(|x| x.to_string()).collect()))?;
    u0.check_same_grid(v0)?;
    if u0.grid() != model.grid() {
        return Err(Error::GridMismatch);
    }
    let bound = stability_bound(u0.spec(), params, options.stability_factor);
    if config.dt > bound {
        return Err(Error::StabilityViolation { dt: config.dt, bound });
    }
    let rhs = Rhs {
        params: *params,
        damp: model.mu_field().add(&model.mu_tilde_field()),
    };
    let h = config.dt;
    let cap = options.overflow_cap;
    let exps = |w: &ComplexField| (w.map(|z| z.exp()), w.map(|z| (-z).exp()));

    let mut rec = Recorder::new(config, params, u0, v0);
    let (mut y, mut z) = (u0.clone(), v0.clone());
    let mut w0 = model.w_field(path, 0)?;
    check_overflow(&w0, cap)?;
    let (mut e0, mut m0) = exps(&w0);
    let mut last = 0;
    if !rec.observe(0, u0, v0, Some((&y, &z)))? {
        for k in 0..config.n_steps {
            let w1 = model.w_field(path, k + 1)?;
            check_overflow(&w1, cap)?;
            let wm = w0.zip_map(&w1, |a, b| 0.5 * (a + b));
            let (e1, m1) = exps(&w1);
            let (em, mm) = exps(&wm);

            let (k1y, k1z) = rhs.eval(&y, &z, &e0, &m0);
            let (k2y, k2z) = rhs.eval(&axpy(&y, 0.5 * h, &k1y), &axpy(&z, 0.5 * h, &k1z), &em, &mm);
            let (k3y, k3z) = rhs.eval(&axpy(&y, 0.5 * h, &k2y), &axpy(&z, 0.5 * h, &k2z), &em, &mm);
            let (k4y, k4z) = rhs.eval(&axpy(&y, h, &k3y), &axpy(&z, h, &k3z), &e1, &m1);
            let combine = |base: &mut ComplexField, a: &ComplexField, b: &ComplexField, c: &ComplexField, d: &ComplexField| {
                for (i, o) in base.values_mut().iter_mut().enumerate() {
                    *o += h / 6.0 * (a.values()[i] + 2.0 * b.values()[i] + 2.0 * c.values()[i] + d.values()[i]);
                }
            };
            combine(&mut y, &k1y, &k2y, &k3y, &k4y);
            combine(&mut z, &k1z, &k2z, &k3z, &k4z);

            last = k + 1;
            let u = e1.mul(&y);
            let v = e1.mul(&z);
            if rec.observe(last, &u, &v, Some((&y, &z)))? {
                break;
            }
            w0 = w1;
            e0 = e1;
            m0 = m1;
        }
    }
    let prov = Provenance::new(SolverKind::Rescaled, params, model, path, config.n_steps);
    Ok(rec.finish(prov, last))
}
