//! Mass, energy, interaction, space-time norms and the Gagliardo-Nirenberg ratio.
//!
//! Energy convention: for the system `i du = (1/2l) lap u dt + lambda v conj(u) dt + ...`
//! the quantity conserved by the noiseless flow is
//! `E = K - Re(lambda <v, u^2>)`, with `<f, g> = int f conj(g)`. For real `lambda`
//! this is `K - lambda P`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{grad_norm_sq, gradient, l2_norm_sq, lp_norm, ComplexField};
use crate::params::SystemParams;
use crate::record::TrajectoryRecord;

/// Sign in front of `Re(lambda <v, u^2>)` in the energy.
pub const INTERACTION_SIGN: f64 = -1.0;

pub const ENERGY_DESCRIPTION: &str = "E = K - Re(lambda * <v, u^2>), <f,g> = int f conj(g)";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctionalSample {
    pub t: f64,
    #[serde(rename = "Q")]
    pub q: f64,
    #[serde(rename = "E")]
    pub e: f64,
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "P")]
    pub p: f64,
    /// `<v, u^2>`; together with `K` and `lambda` it determines `E`.
    pub pairing: Complex64,
    pub l2_u: f64,
    pub l2_v: f64,
    pub h1_u: f64,
    pub h1_v: f64,
}

impl FunctionalSample {
    pub fn compute(t: f64, u: &ComplexField, v: &ComplexField, params: &SystemParams) -> Self {
        let gu = grad_norm_sq(u);
        let gv = grad_norm_sq(v);
        let nu = l2_norm_sq(u);
        let nv = l2_norm_sq(v);
        let k = kinetic_from_parts(gu, gv, params);
        let pairing = interaction_pairing_unchecked(u, v);
        FunctionalSample {
            t,
            q: nu + params.c * nv,
            e: energy_from_parts(k, pairing, params.lambda),
            k,
            p: pairing.re,
            pairing,
            l2_u: nu.sqrt(),
            l2_v: nv.sqrt(),
            h1_u: (nu + gu).sqrt(),
            h1_v: (nv + gv).sqrt(),
        }
    }

    /// `E` recomputed from the stored `K` and pairing.
    pub fn energy_recomputed(&self, lambda: Complex64) -> f64 {
        energy_from_parts(self.k, self.pairing, lambda)
    }
}

pub fn energy_from_parts(k: f64, pairing: Complex64, lambda: Complex64) -> f64 {
    k + INTERACTION_SIGN * (lambda * pairing).re
}

fn kinetic_from_parts(grad_u_sq: f64, grad_v_sq: f64, params: &SystemParams) -> f64 {
    grad_u_sq / (2.0 * params.ell) + params.c * grad_v_sq / (4.0 * params.big_l)
}

/// `Q = ||u||^2 + c ||v||^2`; negative values are possible when `c < 0`.
pub fn mass_q(u: &ComplexField, v: &ComplexField, c: f64) -> Result<f64> {
    u.check_same_grid(v)?;
    Ok(l2_norm_sq(u) + c * l2_norm_sq(v))
}

/// `K = (1/2l) ||grad u||^2 + (c/4L) ||grad v||^2`.
pub fn kinetic_k(u: &ComplexField, v: &ComplexField, params: &SystemParams) -> Result<f64> {
    u.check_same_grid(v)?;
    Ok(kinetic_from_parts(grad_norm_sq(u), grad_norm_sq(v), params))
}

fn interaction_pairing_unchecked(u: &ComplexField, v: &ComplexField) -> Complex64 {
    let s: Complex64 = u
        .values()
        .iter()
        .zip(v.values())
        .map(|(a, b)| b * (a * a).conj())
        .sum();
    s * u.spec().cell_volume()
}

/// `<v, u^2> = int v conj(u)^2`.
pub fn interaction_pairing(u: &ComplexField, v: &ComplexField) -> Result<Complex64> {
    u.check_same_grid(v)?;
    Ok(interaction_pairing_unchecked(u, v))
}

/// `P = Re int u^2 conj(v)`.
pub fn interaction_p(u: &ComplexField, v: &ComplexField) -> Result<f64> {
    Ok(interaction_pairing(u, v)?.re)
}

pub fn energy_e(u: &ComplexField, v: &ComplexField, params: &SystemParams) -> Result<f64> {
    let k = kinetic_k(u, v, params)?;
    Ok(energy_from_parts(k, interaction_pairing_unchecked(u, v), params.lambda))
}

/// Checks `2/q = d/2 - d/p` with `p, q in [2, inf]`, and `p < inf`, `q > 2` when `d = 2`.
pub fn strichartz_admissible(d: usize, p: f64, q: f64) -> Result<()> {
    let fail = |why: String| Err(Error::InadmissiblePair(format!("(p, q) = ({p}, {q}), d = {d}: {why}")));
    if d == 0 {
        return fail("dimension must be >= 1".into());
    }
    if p.is_nan() || q.is_nan() || p < 2.0 || q < 2.0 {
        return fail("p and q must lie in [2, inf]".into());
    }
    if d == 2 {
        if p.is_infinite() {
            return fail("d = 2 excludes p = inf".into());
        }
        if q == 2.0 {
            return fail("d = 2 excludes q = 2".into());
        }
    }
    let d = d as f64;
    let lhs = if q.is_infinite() { 0.0 } else { 2.0 / q };
    let rhs = d / 2.0 - if p.is_infinite() { 0.0 } else { d / p };
    if (lhs - rhs).abs() > 1e-12 * (1.0 + lhs.abs()) {
        return fail(format!("2/q = {lhs} but d/2 - d/p = {rhs}"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    First,
    Second,
}

/// Space-time norm `(sum_i ||f(t_i)||_{L^p}^q (t_{i+1} - t_i))^{1/q}` over the
/// recorded states (left Riemann sum); for `q = inf` the maximum over samples.
/// Uses the physical fields (`u, v`) of the record.
pub fn spacetime_norm(
    record: &TrajectoryRecord,
    which: Component,
    q: f64,
    p: f64,
    d: usize,
) -> Result<f64> {
    strichartz_admissible(d, p, q)?;
    if d != record.provenance.grid.dim {
        return Err(Error::InvalidArgument(format!(
            "pair dimension {d} differs from grid dimension {}",
            record.provenance.grid.dim
        )));
    }
    let norms: Vec<f64> = record
        .physical_snapshots()
        .iter()
        .map(|(u, v)| {
            let f = match which {
                Component::First => u,
                Component::Second => v,
            };
            lp_norm(f, p)
        })
        .collect::<Result<_>>()?;
    if norms.is_empty() {
        return Ok(0.0);
    }
    if q.is_infinite() {
        return Ok(norms.iter().cloned().fold(0.0, f64::max));
    }
    let times = &record.sample_times();
    let s: f64 = norms
        .windows(2)
        .zip(times.windows(2))
        .map(|(n, t)| n[0].powf(q) * (t[1] - t[0]))
        .sum();
    Ok(s.powf(1.0 / q))
}

/// `||f||_{L^3} / (||grad f||^{d/6} ||f||^{1 - d/6})`.
pub fn gn_ratio(f: &ComplexField) -> Result<f64> {
    let d = f.spec().dim as f64;
    let l2 = l2_norm_sq(f).sqrt();
    let grad_sq: f64 = gradient(f).iter().map(l2_norm_sq).sum();
    if l2 == 0.0 || grad_sq == 0.0 {
        return Err(Error::Undefined(
            "Gagliardo-Nirenberg ratio of a zero or constant field".into(),
        ));
    }
    let l3 = lp_norm(f, 3.0)?;
    Ok(l3 / (grad_sq.sqrt().powf(d / 6.0) * l2.powf(1.0 - d / 6.0)))
}
