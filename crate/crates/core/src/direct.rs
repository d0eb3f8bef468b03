//! Strang split-step integrator for the Ito system in `(u, v)`.
//!
//! One step of size `dt` is: half dispersion, full nonlinear (pointwise RK4),
//! full exact multiplicative noise/damping, half dispersion.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::ComplexField;
use crate::noise::{BrownianPath, NoiseModel};
use crate::params::SystemParams;
use crate::record::{Provenance, SolverKind, TrajectoryRecord};
use crate::solver::{Recorder, SolverConfig};

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, PartialEq)]
pub struct PairState {
    pub u: ComplexField,
    pub v: ComplexField,
    pub t: f64,
}

impl PairState {
    pub fn new(u: ComplexField, v: ComplexField, t: f64) -> Result<Self> {
        u.check_same_grid(&v)?;
        Ok(PairState { u, v, t })
    }
}

fn check_params(params: &SystemParams) -> Result<()> {
    params.validate(false).map(|_| ()).map_err(|v| {
        Error::Config(v.iter().map(|x| x.to_string()).collect())
    })
}

/// Exact linear flow `u_t = -(i/2l) lap u`, `v_t = -(i/2L) lap v` over `tau`.
pub fn dispersion_step(state: &PairState, params: &SystemParams, tau: f64) -> Result<PairState> {
    check_params(params)?;
    let (a, b) = (1.0 / (2.0 * params.ell), 1.0 / (2.0 * params.big_l));
    Ok(PairState {
        u: state.u.fourier_multiplier(|ksq| (I * (a * ksq * tau)).exp()),
        v: state.v.fourier_multiplier(|ksq| (I * (b * ksq * tau)).exp()),
        t: state.t,
    })
}

#[inline]
fn nl_rhs(u: Complex64, v: Complex64, lambda: Complex64, kappa: Complex64) -> (Complex64, Complex64) {
    (-I * lambda * v * u.conj(), -I * kappa * u * u)
}

#[inline]
fn rk4_point(u: Complex64, v: Complex64, lambda: Complex64, kappa: Complex64, h: f64) -> (Complex64, Complex64) {
    let (k1u, k1v) = nl_rhs(u, v, lambda, kappa);
    let (k2u, k2v) = nl_rhs(u + 0.5 * h * k1u, v + 0.5 * h * k1v, lambda, kappa);
    let (k3u, k3v) = nl_rhs(u + 0.5 * h * k2u, v + 0.5 * h * k2v, lambda, kappa);
    let (k4u, k4v) = nl_rhs(u + h * k3u, v + h * k3v, lambda, kappa);
    (
        u + h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u),
        v + h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v),
    )
}

/// Pointwise RK4 for `u_t = -i lambda v conj(u)`, `v_t = -i kappa u^2` over `tau`.
pub fn nonlinear_step(state: &PairState, params: &SystemParams, tau: f64) -> Result<PairState> {
    check_params(params)?;
    state.u.check_same_grid(&state.v)?;
    let mut u = state.u.clone();
    let mut v = state.v.clone();
    for (a, b) in u.values_mut().iter_mut().zip(v.values_mut().iter_mut()) {
        let (na, nb) = rk4_point(*a, *b, params.lambda, params.kappa, tau);
        *a = na;
        *b = nb;
    }
    Ok(PairState { u, v, t: state.t })
}

/// Exact solution of `du = -mu u dt + u dW` over increment `k`:
/// multiplication by `exp(dW_k - (mu + mu~) dt)`.
pub fn noise_damping_step(
    state: &PairState,
    model: &NoiseModel,
    path: &BrownianPath,
    k: usize,
) -> Result<PairState> {
    state.u.check_same_grid(&state.v)?;
    if !state.u.same_grid(&model.mu_field()) {
        return Err(Error::GridMismatch);
    }
    let dw = model.delta_w(path, k)?;
    let damp = model.mu_field().add(&model.mu_tilde_field());
    let factor = dw.zip_map(&damp, |w, d| (w - d * path.dt).exp());
    Ok(PairState {
        u: state.u.mul(&factor),
        v: state.v.mul(&factor),
        t: state.t,
    })
}

/// One full Strang step from `t_k` to `t_{k+1}`.
pub fn strang_step(
    state: &PairState,
    params: &SystemParams,
    model: &NoiseModel,
    path: &BrownianPath,
    k: usize,
) -> Result<PairState> {
    let dt = path.dt;
    let s = dispersion_step(state, params, 0.5 * dt)?;
    let s = nonlinear_step(&s, params, dt)?;
    let s = noise_damping_step(&s, model, path, k)?;
    let mut s = dispersion_step(&s, params, 0.5 * dt)?;
    s.t = (k + 1) as f64 * dt;
    Ok(s)
}

/// Precomputed operators for repeated stepping on one path.
pub struct DirectStepper<'a> {
    params: SystemParams,
    model: &'a NoiseModel,
    path: &'a BrownianPath,
    half_u: Vec<Complex64>,
    half_v: Vec<Complex64>,
    damping: Vec<Complex64>,
    phis: Vec<ComplexField>,
}

impl<'a> DirectStepper<'a> {
    pub fn new(params: &SystemParams, model: &'a NoiseModel, path: &'a BrownianPath) -> Result<Self> {
        check_params(params)?;
        if path.n_modes() != model.len() {
            return Err(Error::InvalidArgument(format!(
                "path has {} modes, model has {}",
                path.n_modes(),
                model.len()
            )));
        }
        let dt = path.dt;
        let grid = model.grid();
        let half = |m: f64| -> Vec<Complex64> {
            grid.k_squared()
                .iter()
                .map(|ksq| (I * (ksq * 0.5 * dt / (2.0 * m))).exp())
                .collect()
        };
        let damping = model
            .mu_field()
            .add(&model.mu_tilde_field())
            .values()
            .iter()
            .map(|d| d * dt)
            .collect();
        Ok(DirectStepper {
            params: *params,
            model,
            path,
            half_u: half(params.ell),
            half_v: half(params.big_l),
            damping,
            phis: model.phi_fields(),
        })
    }

    fn half_dispersion(&self, f: &ComplexField, mult: &[Complex64]) -> ComplexField {
        let mut c = f.spectrum();
        for (z, m) in c.iter_mut().zip(mult) {
            *z *= m;
        }
        ComplexField::from_spectrum(f.grid(), c).expect("length matches grid")
    }

    /// Advances `(u, v)` in place across increment `k`.
    pub fn step(&self, u: &mut ComplexField, v: &mut ComplexField, k: usize) {
        *u = self.half_dispersion(u, &self.half_u);
        *v = self.half_dispersion(v, &self.half_v);
        let dt = self.path.dt;
        let incs: Vec<f64> = (0..self.model.len()).map(|j| self.path.increment(j, k)).collect();
        let (lambda, kappa) = (self.params.lambda, self.params.kappa);
        let uv = u.values_mut().iter_mut().zip(v.values_mut().iter_mut());
        for (idx, (a, b)) in uv.enumerate() {
            let (na, nb) = rk4_point(*a, *b, lambda, kappa, dt);
            let mut w = -self.damping[idx];
            for (phi, db) in self.phis.iter().zip(&incs) {
                w += phi.values()[idx] * db;
            }
            let f = w.exp();
            *a = na * f;
            *b = nb * f;
        }
        *u = self.half_dispersion(u, &self.half_u);
        *v = self.half_dispersion(v, &self.half_v);
    }
}

/// Integrates from `(u0, v0)` at `t = 0` for `config.n_steps` steps, stopping
/// early when the configured norm exceeds the threshold.
pub fn run_direct(
    u0: &ComplexField,
    v0: &ComplexField,
    params: &SystemParams,
    model: &NoiseModel,
    path: &BrownianPath,
    config: &SolverConfig,
) -> Result<TrajectoryRecord> {
    config.validate()?;
    config.check_path_dt(path.dt, path.n_steps)?;
    u0.check_same_grid(v0)?;
    if u0.grid() != model.grid() {
        return Err(Error::GridMismatch);
    }
    let stepper = DirectStepper::new(params, model, path)?;
    let mut rec = Recorder::new(config, params, u0, v0);
    let (mut u, mut v) = (u0.clone(), v0.clone());
    let mut last = 0;
    if !rec.observe(0, &u, &v, None)? {
        for k in 0..config.n_steps {
            stepper.step(&mut u, &mut v, k);
            last = k + 1;
            if rec.observe(last, &u, &v, None)? {
                break;
            }
        }
    }
    let prov = Provenance::new(SolverKind::Direct, params, model, path, config.n_steps);
    Ok(rec.finish(prov, last))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::{energy_e, mass_q};
    use crate::grid::{Grid, GridSpec};
    use crate::noise::{sample_path, ModeShape, NoiseMode};

    fn setup() -> (std::sync::Arc<Grid>, SystemParams, ComplexField, ComplexField) {
        let g = Grid::new(GridSpec::new(1, 64, 16.0).unwrap()).unwrap();
        let p = SystemParams::compatible(1.0, 0.5, Complex64::new(1.0, 0.0), 2.0);
        let u = ComplexField::from_fn(&g, |x| {
            let r = x[0] - 8.0;
            Complex64::new((-r * r).exp(), 0.3 * (-r * r).exp())
        });
        let v = ComplexField::from_fn(&g, |x| {
            let r = x[0] - 7.5;
            Complex64::new(0.5 * (-r * r / 2.0).exp(), 0.0)
        });
        (g, p, u, v)
    }

    #[test]
    fn dispersion_is_unitary_and_reversible() {
        let (_, p, u, v) = setup();
        let s = PairState::new(u.clone(), v, 0.0).unwrap();
        let f = dispersion_step(&s, &p, 0.3).unwrap();
        let b = dispersion_step(&f, &p, -0.3).unwrap();
        let nu = crate::grid::l2_norm_sq(&u);
        assert!((crate::grid::l2_norm_sq(&f.u) - nu).abs() < 1e-12 * nu);
        assert!(b.u.sub(&u).max_abs() < 1e-12);
    }

    #[test]
    fn plane_wave_dispersion_matches_closed_form() {
        let (g, p, _, _) = setup();
        let k = 2.0 * std::f64::consts::PI * 3.0 / 16.0;
        let u = ComplexField::from_fn(&g, |x| (I * k * x[0]).exp());
        let s = PairState::new(u.clone(), u.clone(), 0.0).unwrap();
        let out = dispersion_step(&s, &p, 0.7).unwrap();
        let expect = u.scale((I * k * k * 0.7 / 2.0).exp());
        assert!(out.u.sub(&expect).max_abs() < 1e-12);
    }

    #[test]
    fn deterministic_run_conserves_mass_and_energy() {
        let (g, p, u, v) = setup();
        let model = NoiseModel::deterministic(&g);
        let path = sample_path(&model, 1, 1e-3, 200).unwrap();
        let cfg = SolverConfig::new(1e-3, 0.2).unwrap();
        let rec = run_direct(&u, &v, &p, &model, &path, &cfg).unwrap();
        let (q0, e0) = (rec.samples[0].q, rec.samples[0].e);
        let last = rec.final_sample();
        assert!((last.q - q0).abs() < 1e-10 * q0.abs());
        assert!((last.e - e0).abs() < 1e-5 * e0.abs().max(1.0));
        assert_eq!(rec.final_step, 200);
        assert_eq!(rec.samples.len(), 201);
    }

    #[test]
    fn stepper_matches_public_substeps() {
        let (g, p, u, v) = setup();
        let model = NoiseModel::new(
            &g,
            vec![NoiseMode::new(&g, Complex64::new(0.3, 0.7), ModeShape::cosine(1)).unwrap()],
        )
        .unwrap();
        let path = sample_path(&model, 9, 1e-2, 5).unwrap();
        let stepper = DirectStepper::new(&p, &model, &path).unwrap();
        let mut s = PairState::new(u.clone(), v.clone(), 0.0).unwrap();
        let (mut a, mut b) = (u, v);
        for k in 0..5 {
            s = strang_step(&s, &p, &model, &path, k).unwrap();
            stepper.step(&mut a, &mut b, k);
        }
        assert!(s.u.sub(&a).max_abs() < 1e-12);
        assert!(s.v.sub(&b).max_abs() < 1e-12);
        assert!((s.t - 0.05).abs() < 1e-15);
    }

    #[test]
    fn imaginary_noise_conserves_mass_pathwise() {
        let (g, p, u, v) = setup();
        let model = NoiseModel::new(
            &g,
            vec![NoiseMode::new(&g, Complex64::new(0.0, 1.0), ModeShape::cosine(1)).unwrap()],
        )
        .unwrap();
        let path = sample_path(&model, 4, 1e-3, 100).unwrap();
        let cfg = SolverConfig::new(1e-3, 0.1).unwrap();
        let rec = run_direct(&u, &v, &p, &model, &path, &cfg).unwrap();
        let q0 = mass_q(&u, &v, p.c).unwrap();
        assert!((rec.final_sample().q - q0).abs() < 1e-10 * q0);
        let _ = energy_e(&u, &v, &p).unwrap();
    }

    #[test]
    fn blowup_monitor_stops_early() {
        let (g, p, u, v) = setup();
        let model = NoiseModel::new(
            &g,
            vec![NoiseMode::new(&g, Complex64::new(-3.0, 0.0), ModeShape::constant()).unwrap()],
        )
        .unwrap();
        let path = sample_path(&model, 2, 1e-2, 100).unwrap();
        let n0 = crate::grid::l2_norm_sq(&u).sqrt() + crate::grid::l2_norm_sq(&v).sqrt();
        let cfg = SolverConfig::new(1e-2, 1.0).unwrap().with_threshold(n0 * 0.999);
        let rec = run_direct(&u, &v, &p, &model, &path, &cfg).unwrap();
        // constant real noise rescales the norm by a log-normal factor; the
        // threshold is below the start value, so the very first check fires
        assert_eq!(rec.blowup.unwrap().step, 0);
        assert_eq!(rec.final_step, 0);
    }

    #[test]
    fn mismatched_path_dt_rejected() {
        let (g, p, u, v) = setup();
        let model = NoiseModel::deterministic(&g);
        let path = sample_path(&model, 1, 2e-3, 100).unwrap();
        let cfg = SolverConfig::new(1e-3, 0.1).unwrap();
        assert!(run_direct(&u, &v, &p, &model, &path, &cfg).is_err());
    }
}
