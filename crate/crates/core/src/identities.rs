//! Pathwise residuals of the rescaling equivalence, the mass identity and the
//! energy identity, plus the deterministic conservation report.
//!
//! Stochastic integrals are left-point sums on the solver's own increments. The
//! default [`ItoQuadrature::LeftPointCorrected`] adds the iterated-integral term
//! `1/2 sum_{j,j'} g_{jj'} (dB_j dB_j' - delta_{jj'} dt)`, `g_{jj'} = D h_j[phi_j' X]`,
//! which is still evaluated at the left endpoint; plain left-point sums converge
//! only at order 1/2 in the step size.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{energy_e, mass_q};
use crate::grid::{grad_inner, grad_norm_sq, l2_norm_sq, ComplexField};
use crate::noise::{BrownianPath, NoiseModel};
use crate::params::SystemParams;
use crate::record::TrajectoryRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ItoQuadrature {
    LeftPoint,
    #[default]
    LeftPointCorrected,
}

/// Which right-hand side the energy residual assembles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EnergyIdentityForm {
    /// Full Ito expansion of `E`: includes the quadratic-variation interaction
    /// drift `-Re(lambda int sum_j (2|phi_j|^2 + conj(phi_j)^2) v conj(u)^2)` and
    /// the stochastic weight `phi_j + 2 conj(phi_j)` on the interaction term.
    #[default]
    ItoCorrected,
    /// Interaction terms `3 Re(lambda int mu v conj(u)^2) ds` and
    /// `-3 Re(lambda int conj(phi_j) v conj(u)^2) dB_j` only.
    AsPublished,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSeries {
    pub times: Vec<f64>,
    pub steps: Vec<usize>,
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    pub residual: Vec<f64>,
    pub dt: f64,
}

impl ResidualSeries {
    fn from_columns(times: Vec<f64>, steps: Vec<usize>, lhs: Vec<f64>, rhs: Vec<f64>, dt: f64) -> Self {
        let residual = lhs.iter().zip(&rhs).map(|(a, b)| (a - b).abs()).collect();
        ResidualSeries {
            times,
            steps,
            lhs,
            rhs,
            residual,
            dt,
        }
    }

    pub fn final_residual(&self) -> f64 {
        *self.residual.last().unwrap_or(&0.0)
    }

    pub fn max_residual(&self) -> f64 {
        self.residual.iter().copied().fold(0.0, f64::max)
    }
}

/// Relative distances `||u - e^W y|| / max(||u||, eps)` per shared sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceSeries {
    pub times: Vec<f64>,
    pub steps: Vec<usize>,
    pub rel_u: Vec<f64>,
    pub rel_v: Vec<f64>,
    /// `max(rel_u, rel_v)`.
    pub residual: Vec<f64>,
    pub dt: f64,
}

impl EquivalenceSeries {
    pub fn final_residual(&self) -> f64 {
        *self.residual.last().unwrap_or(&0.0)
    }
}

pub const EQUIVALENCE_EPS: f64 = 1e-14;

pub fn equivalence_residual(
    direct: &TrajectoryRecord,
    rescaled: &TrajectoryRecord,
    model: &NoiseModel,
    path: &BrownianPath,
) -> Result<EquivalenceSeries> {
    direct.provenance.matches(&rescaled.provenance).map_err(Error::Provenance)?;
    direct.provenance.matches_path(model, path).map_err(Error::Provenance)?;
    // a run stopped by the blow-up monitor is compared over the steps both reached
    if direct.sample_steps() != rescaled.sample_steps() && !direct.blew_up() && !rescaled.blew_up() {
        return Err(Error::Provenance("records were sampled at different steps".into()));
    }
    let mut out = EquivalenceSeries {
        times: Vec::new(),
        steps: Vec::new(),
        rel_u: Vec::new(),
        rel_v: Vec::new(),
        residual: Vec::new(),
        dt: path.dt,
    };
    let common = direct.snapshots.iter().filter_map(|a| {
        rescaled
            .snapshots
            .binary_search_by_key(&a.step, |b| b.step)
            .ok()
            .map(|i| (a, &rescaled.snapshots[i]))
    });
    for (a, b) in common {
        let (y, z) = b
            .native
            .as_ref()
            .ok_or_else(|| Error::Provenance("second record carries no (y, z) states".into()))?;
        let ew = model.w_field(path, a.step)?.map(|w| w.exp());
        let rel = |f: &ComplexField, g: &ComplexField| {
            let d = l2_norm_sq(&f.sub(&ew.mul(g))).sqrt();
            d / l2_norm_sq(f).sqrt().max(EQUIVALENCE_EPS)
        };
        let (ru, rv) = (rel(&a.u, y), rel(&a.v, z));
        out.times.push(a.t);
        out.steps.push(a.step);
        out.rel_u.push(ru);
        out.rel_v.push(rv);
        out.residual.push(ru.max(rv));
    }
    Ok(out)
}

fn dense_states(record: &TrajectoryRecord) -> Result<&[(ComplexField, ComplexField)]> {
    record
        .dense
        .as_deref()
        .filter(|d| d.len() == record.final_step + 1)
        .ok_or(Error::DenseDataUnavailable)
}

/// `1/2 sum_{j,j'} D h_j[(phi_j' u, phi_j' v)] (dB_j dB_j' - delta dt)`, with the
/// directional derivative from a five-point stencil, which is exact for the
/// polynomial (degree <= 3) integrands used here.
fn iterated_correction(
    h: &dyn Fn(&ComplexField, &ComplexField) -> Vec<f64>,
    u: &ComplexField,
    v: &ComplexField,
    phis: &[ComplexField],
    incs: &[f64],
    dt: f64,
) -> f64 {
    const EPS: f64 = 0.5;
    let mut acc = 0.0;
    for (jp, phi) in phis.iter().enumerate() {
        let (du, dv) = (phi.mul(u), phi.mul(v));
        let at = |e: f64| {
            let s = Complex64::from(e);
            h(&u.add(&du.scale(s)), &v.add(&dv.scale(s)))
        };
        let (p2, p1, m1, m2) = (at(2.0 * EPS), at(EPS), at(-EPS), at(-2.0 * EPS));
        for j in 0..phis.len() {
            let g = (-p2[j] + 8.0 * p1[j] - 8.0 * m1[j] + m2[j]) / (12.0 * EPS);
            let q = incs[j] * incs[jp] - if j == jp { dt } else { 0.0 };
            acc += 0.5 * g * q;
        }
    }
    acc
}

fn assemble(
    record: &TrajectoryRecord,
    model: &NoiseModel,
    path: &BrownianPath,
    quadrature: ItoQuadrature,
    functional: &dyn Fn(&ComplexField, &ComplexField) -> f64,
    drift: &dyn Fn(&ComplexField, &ComplexField) -> f64,
    integrands: &dyn Fn(&ComplexField, &ComplexField) -> Vec<f64>,
) -> Result<ResidualSeries> {
    record.provenance.matches_path(model, path).map_err(Error::Provenance)?;
    let states = dense_states(record)?;
    let dt = path.dt;
    let phis = model.phi_fields();
    let mut rhs_path = Vec::with_capacity(states.len());
    let (u0, v0) = &states[0];
    let mut acc = functional(u0, v0);
    rhs_path.push(acc);
    for (k, (u, v)) in states[..states.len() - 1].iter().enumerate() {
        let incs: Vec<f64> = (0..model.len()).map(|j| path.increment(j, k)).collect();
        let h = integrands(u, v);
        acc += drift(u, v) * dt + h.iter().zip(&incs).map(|(a, b)| a * b).sum::<f64>();
        if quadrature == ItoQuadrature::LeftPointCorrected && !phis.is_empty() {
            acc += iterated_correction(integrands, u, v, &phis, &incs, dt);
        }
        rhs_path.push(acc);
    }
    let steps = record.sample_steps();
    let times = steps.iter().map(|&s| s as f64 * dt).collect();
    let lhs = steps.iter().map(|&s| functional(&states[s].0, &states[s].1)).collect();
    let rhs = steps.iter().map(|&s| rhs_path[s]).collect();
    Ok(ResidualSeries::from_columns(times, steps, lhs, rhs, dt))
}

/// Residual of `Q(t) = Q(0) + 2 sum_j int int Re(mu_j) e_j (|u|^2 + c|v|^2) dB_j`.
pub fn mass_identity_residual(
    record: &TrajectoryRecord,
    model: &NoiseModel,
    path: &BrownianPath,
    c: f64,
) -> Result<ResidualSeries> {
    mass_identity_residual_with(record, model, path, c, ItoQuadrature::default())
}

pub fn mass_identity_residual_with(
    record: &TrajectoryRecord,
    model: &NoiseModel,
    path: &BrownianPath,
    c: f64,
    quadrature: ItoQuadrature,
) -> Result<ResidualSeries> {
    let weights: Vec<Vec<f64>> = model
        .modes()
        .iter()
        .map(|m| m.profile().values().iter().map(|e| 2.0 * m.mu.re * e.re).collect())
        .collect();
    let cell = model.grid().spec().cell_volume();
    let integrands = |u: &ComplexField, v: &ComplexField| -> Vec<f64> {
        weights
            .iter()
            .map(|w| {
                let s: f64 = w
                    .iter()
                    .zip(u.values().iter().zip(v.values()))
                    .map(|(w, (a, b))| w * (a.norm_sqr() + c * b.norm_sqr()))
                    .sum();
                s * cell
            })
            .collect()
    };
    let q = |u: &ComplexField, v: &ComplexField| mass_q(u, v, c).expect("dense states share a grid");
    assemble(record, model, path, quadrature, &q, &|_, _| 0.0, &integrands)
}

/// `int w v conj(u)^2`.
fn weighted_pairing(w: &ComplexField, u: &ComplexField, v: &ComplexField) -> Complex64 {
    let s: Complex64 = w
        .values()
        .iter()
        .zip(u.values().iter().zip(v.values()))
        .map(|(w, (a, b))| w * b * (a * a).conj())
        .sum();
    s * w.spec().cell_volume()
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyOptions {
    pub form: EnergyIdentityForm,
    pub quadrature: ItoQuadrature,
}

pub fn energy_identity_residual(
    record: &TrajectoryRecord,
    model: &NoiseModel,
    path: &BrownianPath,
    params: &SystemParams,
) -> Result<ResidualSeries> {
    energy_identity_residual_with(record, model, path, params, EnergyOptions::default())
}

pub fn energy_identity_residual_with(
    record: &TrajectoryRecord,
    model: &NoiseModel,
    path: &BrownianPath,
    params: &SystemParams,
    options: EnergyOptions,
) -> Result<ResidualSeries> {
    params.validate(true).map_err(|v| {
        Error::Constraint(v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; "))
    })?;
    let (ell, big_l, c, lambda) = (params.ell, params.big_l, params.c, params.lambda);
    let mu = model.mu_field();
    let phis = model.phi_fields();
    let corrected = options.form == EnergyIdentityForm::ItoCorrected;
    // sum_j (2|phi_j|^2 + conj(phi_j)^2) = 4 mu + 2 conj(mu~)
    let qv_weight = mu.scale(Complex64::from(4.0)).add(&model.mu_tilde_field().conj().scale(Complex64::from(2.0)));
    let interaction_weights: Vec<ComplexField> = phis
        .iter()
        .map(|p| {
            if corrected {
                p.add(&p.conj().scale(Complex64::from(2.0)))
            } else {
                p.conj().scale(Complex64::from(3.0))
            }
        })
        .collect();

    let drift = |u: &ComplexField, v: &ComplexField| -> f64 {
        let mut d = -grad_inner(&mu.mul(u), u).unwrap().re / ell
            - c / (2.0 * big_l) * grad_inner(&mu.mul(v), v).unwrap().re;
        for p in &phis {
            d += grad_norm_sq(&p.mul(u)) / (2.0 * ell) + c / (4.0 * big_l) * grad_norm_sq(&p.mul(v));
        }
        d += 3.0 * (lambda * weighted_pairing(&mu, u, v)).re;
        if corrected {
            d -= (lambda * weighted_pairing(&qv_weight, u, v)).re;
        }
        d
    };
    let integrands = |u: &ComplexField, v: &ComplexField| -> Vec<f64> {
        phis.iter()
            .zip(&interaction_weights)
            .map(|(p, w)| {
                grad_inner(&p.mul(u), u).unwrap().re / ell
                    + c / (2.0 * big_l) * grad_inner(&p.mul(v), v).unwrap().re
                    - (lambda * weighted_pairing(w, u, v)).re
            })
            .collect()
    };
    let e = |u: &ComplexField, v: &ComplexField| energy_e(u, v, params).expect("dense states share a grid");
    assemble(record, model, path, options.quadrature, &e, &drift, &integrands)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConservationReport {
    pub q0: f64,
    pub e0: f64,
    /// `max_t |Q(t) - Q(0)| / |Q(0)|` (absolute when `Q(0) = 0`).
    pub q_drift: f64,
    /// `max_t |E(t) - E(0)| / max(|E(0)|, eps)`.
    pub e_drift: f64,
}

pub const CONSERVATION_EPS: f64 = 1e-14;

pub fn deterministic_conservation(record: &TrajectoryRecord) -> Result<ConservationReport> {
    if !record.provenance.is_deterministic() {
        return Err(Error::NoisyRecord);
    }
    let first = record.samples.first().ok_or(Error::DenseDataUnavailable)?;
    let (q0, e0) = (first.q, first.e);
    let qs = if q0 != 0.0 { q0.abs() } else { 1.0 };
    let es = e0.abs().max(CONSERVATION_EPS);
    let mut r = ConservationReport {
        q0,
        e0,
        q_drift: 0.0,
        e_drift: 0.0,
    };
    for s in &record.samples {
        r.q_drift = r.q_drift.max((s.q - q0).abs() / qs);
        r.e_drift = r.e_drift.max((s.e - e0).abs() / es);
    }
    Ok(r)
}

/// Paths for a coupled refinement study, coarsest first. The finest path has
/// `n_coarse * 2^(levels-1)` steps of `dt_coarse / 2^(levels-1)`.
pub fn coupled_paths(
    model: &NoiseModel,
    seed: u64,
    dt_coarse: f64,
    n_coarse: usize,
    levels: usize,
) -> Result<Vec<BrownianPath>> {
    if levels == 0 {
        return Err(Error::InvalidArgument("levels must be >= 1".into()));
    }
    let f = 1usize << (levels - 1);
    let fine = crate::noise::sample_path(model, seed, dt_coarse / f as f64, n_coarse * f)?;
    let mut out = vec![fine];
    for _ in 1..levels {
        let next = out.last().unwrap().coarsen()?;
        out.push(next);
    }
    out.reverse();
    Ok(out)
}

/// Least-squares slope of `log err` against `log dt`.
pub fn observed_order(dts: &[f64], errs: &[f64]) -> Result<f64> {
    if dts.len() != errs.len() || dts.len() < 2 {
        return Err(Error::InvalidArgument("need >= 2 matching (dt, err) pairs".into()));
    }
    if errs.iter().chain(dts).any(|x| !(*x > 0.0)) {
        return Err(Error::Undefined("observed order needs positive errors and steps".into()));
    }
    let xs: Vec<f64> = dts.iter().map(|x| x.ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|x| x.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Ok(sxy / sxx)
}
