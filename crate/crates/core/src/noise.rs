//! Finite-dimensional Wiener process `W(t, x) = sum_j mu_j e_j(x) beta_j(t)`.
//!
//! Brownian increments come from a counter-based stream: the increment of mode
//! `j` at step `k` is a pure function of `(seed, j, k)`. Coupled coarse paths
//! for refinement studies are obtained with [`BrownianPath::coarsen`].

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ComplexField, Grid};

/// Built-in spatial profiles for `e_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case")]
pub enum ModeShape {
    /// `cos(2 pi (n . x) / L)`; `n = 0` gives the constant profile `1`.
    Cosine { wavenumber: Vec<i64> },
    /// Periodized Gaussian bump `sum_images exp(-|x - c|^2 / (2 w^2))`.
    Gaussian { center: Vec<f64>, width: f64 },
}

impl ModeShape {
    pub fn constant() -> Self {
        ModeShape::Cosine {
            wavenumber: vec![0],
        }
    }

    pub fn cosine(n: i64) -> Self {
        ModeShape::Cosine {
            wavenumber: vec![n],
        }
    }

    pub fn sample(&self, grid: &Arc<Grid>) -> Result<ComplexField> {
        let spec = *grid.spec();
        let l = spec.box_length;
        match self {
            ModeShape::Cosine { wavenumber } => {
                if wavenumber.len() > spec.dim {
                    return Err(Error::InvalidArgument(format!(
                        "cosine wavenumber has {} components on a {}-d grid",
                        wavenumber.len(),
                        spec.dim
                    )));
                }
                let n: Vec<f64> = wavenumber.iter().map(|&v| v as f64).collect();
                Ok(ComplexField::from_fn(grid, |x| {
                    let phase: f64 = n.iter().zip(x.iter()).map(|(n, x)| n * x).sum();
                    (2.0 * PI * phase / l).cos().into()
                }))
            }
            ModeShape::Gaussian { center, width } => {
                if !(*width > 0.0) || center.len() != spec.dim {
                    return Err(Error::InvalidArgument(format!(
                        "gaussian mode needs width > 0 and a {}-component center",
                        spec.dim
                    )));
                }
                let images: Vec<[f64; 3]> = image_shifts(spec.dim, l);
                let w2 = 2.0 * width * width;
                Ok(ComplexField::from_fn(grid, |x| {
                    let s: f64 = images
                        .iter()
                        .map(|shift| {
                            let r2: f64 = (0..spec.dim)
                                .map(|a| (x[a] - center[a] + shift[a]).powi(2))
                                .sum();
                            (-r2 / w2).exp()
                        })
                        .sum();
                    s.into()
                }))
            }
        }
    }
}

fn image_shifts(dim: usize, l: f64) -> Vec<[f64; 3]> {
    let mut out = vec![[0.0; 3]];
    for a in 0..dim {
        let mut next = Vec::with_capacity(out.len() * 3);
        for s in &out {
            for m in [-1.0, 0.0, 1.0] {
                let mut t = *s;
                t[a] = m * l;
                next.push(t);
            }
        }
        out = next;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseMode {
    pub mu: Complex64,
    pub shape: Option<ModeShape>,
    e: ComplexField,
}

impl NoiseMode {
    pub fn new(grid: &Arc<Grid>, mu: Complex64, shape: ModeShape) -> Result<Self> {
        let e = shape.sample(grid)?;
        Ok(NoiseMode {
            mu,
            shape: Some(shape),
            e,
        })
    }

    /// Mode with an arbitrary profile; `e` must be real-valued and finite.
    pub fn from_profile(mu: Complex64, e: ComplexField) -> Result<Self> {
        if e.max_abs_im() != 0.0 {
            return Err(Error::InvalidArgument(
                "noise profile e_j must be real-valued".into(),
            ));
        }
        if !e.is_finite() {
            return Err(Error::InvalidArgument("noise profile must be finite".into()));
        }
        Ok(NoiseMode { mu, shape: None, e })
    }

    pub fn profile(&self) -> &ComplexField {
        &self.e
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    grid: Arc<Grid>,
    modes: Vec<NoiseMode>,
}

impl NoiseModel {
    pub fn new(grid: &Arc<Grid>, modes: Vec<NoiseMode>) -> Result<Self> {
        for m in &modes {
            if m.e.grid().spec() != grid.spec() {
                return Err(Error::GridMismatch);
            }
        }
        Ok(NoiseModel {
            grid: grid.clone(),
            modes,
        })
    }

    /// The noiseless model, `N = 0`.
    pub fn deterministic(grid: &Arc<Grid>) -> Self {
        NoiseModel {
            grid: grid.clone(),
            modes: Vec::new(),
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn modes(&self) -> &[NoiseMode] {
        &self.modes
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// All `mu_j` vanish (including `N = 0`).
    pub fn is_deterministic(&self) -> bool {
        self.modes.iter().all(|m| m.mu == Complex64::new(0.0, 0.0))
    }

    /// `Re mu_j = 0` for every mode.
    pub fn is_conservative(&self) -> bool {
        self.modes.iter().all(|m| m.mu.re == 0.0)
    }

    /// `mu(x) = 1/2 sum_j |mu_j|^2 e_j(x)^2`.
    pub fn mu_field(&self) -> ComplexField {
        let mut out = vec![0.0; self.grid.len()];
        for m in &self.modes {
            let w = 0.5 * m.mu.norm_sqr();
            for (o, e) in out.iter_mut().zip(m.e.values()) {
                *o += w * e.re * e.re;
            }
        }
        ComplexField::from_values(&self.grid, out.into_iter().map(Complex64::from).collect())
            .expect("length matches grid")
    }

    /// `mu~(x) = 1/2 sum_j mu_j^2 e_j(x)^2`.
    pub fn mu_tilde_field(&self) -> ComplexField {
        let mut out = ComplexField::zeros(&self.grid);
        for m in &self.modes {
            let w = 0.5 * m.mu * m.mu;
            for (o, e) in out.values_mut().iter_mut().zip(m.e.values()) {
                *o += w * e.re * e.re;
            }
        }
        out
    }

    /// `phi_j = mu_j e_j` (zero-based `j`).
    pub fn phi_field(&self, j: usize) -> Result<ComplexField> {
        let m = self.modes.get(j).ok_or_else(|| Error::IndexOutOfRange {
            what: "noise mode",
            index: j,
            valid: format!("0..{}", self.modes.len()),
        })?;
        Ok(m.e.scale(m.mu))
    }

    pub fn phi_fields(&self) -> Vec<ComplexField> {
        (0..self.len())
            .map(|j| self.phi_field(j).expect("index in range"))
            .collect()
    }

    fn check_path(&self, path: &BrownianPath) -> Result<()> {
        if path.n_modes() != self.len() {
            return Err(Error::InvalidArgument(format!(
                "path has {} modes, model has {}",
                path.n_modes(),
                self.len()
            )));
        }
        Ok(())
    }

    /// `W(t_k, x)`.
    pub fn w_field(&self, path: &BrownianPath, step: usize) -> Result<ComplexField> {
        self.check_path(path)?;
        if step > path.n_steps {
            return Err(Error::IndexOutOfRange {
                what: "time step",
                index: step,
                valid: format!("0..={}", path.n_steps),
            });
        }
        let mut out = ComplexField::zeros(&self.grid);
        for (j, m) in self.modes.iter().enumerate() {
            let amp = m.mu * path.beta(j, step);
            for (o, e) in out.values_mut().iter_mut().zip(m.e.values()) {
                *o += amp * e.re;
            }
        }
        Ok(out)
    }

    /// `W(t_{k+1}) - W(t_k) = sum_j phi_j dbeta_{j,k}`.
    pub fn delta_w(&self, path: &BrownianPath, step: usize) -> Result<ComplexField> {
        self.check_path(path)?;
        if step >= path.n_steps {
            return Err(Error::IndexOutOfRange {
                what: "increment",
                index: step,
                valid: format!("0..{}", path.n_steps),
            });
        }
        let mut out = ComplexField::zeros(&self.grid);
        for (j, m) in self.modes.iter().enumerate() {
            let amp = m.mu * path.increment(j, step);
            for (o, e) in out.values_mut().iter_mut().zip(m.e.values()) {
                *o += amp * e.re;
            }
        }
        Ok(out)
    }
}

/// Seeded Brownian increments `dbeta_{j,k} ~ N(0, dt)`, stored mode-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrownianPath {
    pub seed: u64,
    pub dt: f64,
    pub n_steps: usize,
    /// Number of pairwise coarsenings applied to the generated path.
    pub level: u32,
    increments: Vec<Vec<f64>>,
    beta: Vec<Vec<f64>>,
}

/// Standard normal draw addressed by `(seed, mode, step)`.
pub fn counter_normal(seed: u64, mode: usize, step: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(mode as u64);
    rng.set_word_pos(4 * step as u128);
    box_muller(rng.next_u64(), rng.next_u64())
}

fn box_muller(a: u64, b: u64) -> f64 {
    const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
    let u1 = 1.0 - (a >> 11) as f64 * SCALE; // (0, 1]
    let u2 = (b >> 11) as f64 * SCALE;
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

impl BrownianPath {
    pub fn sample(n_modes: usize, seed: u64, dt: f64, n_steps: usize) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be positive (got {dt})")));
        }
        if n_steps == 0 {
            return Err(Error::InvalidArgument("n_steps must be >= 1".into()));
        }
        let sd = dt.sqrt();
        let increments = (0..n_modes)
            .map(|j| {
                // sequential reads from stream j coincide with counter_normal(seed, j, k)
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(j as u64);
                (0..n_steps)
                    .map(|_| sd * box_muller(rng.next_u64(), rng.next_u64()))
                    .collect()
            })
            .collect();
        Ok(Self::from_increments(seed, dt, 0, n_steps, increments))
    }

    fn from_increments(
        seed: u64,
        dt: f64,
        level: u32,
        n_steps: usize,
        increments: Vec<Vec<f64>>,
    ) -> Self {
        let beta = increments
            .iter()
            .map(|inc| {
                let mut acc = 0.0;
                let mut b = Vec::with_capacity(inc.len() + 1);
                b.push(0.0);
                for d in inc {
                    acc += d;
                    b.push(acc);
                }
                b
            })
            .collect();
        BrownianPath {
            seed,
            dt,
            n_steps,
            level,
            increments,
            beta,
        }
    }

    /// Path for `n_modes = 0` that still records the time grid.
    pub fn empty(seed: u64, dt: f64, n_steps: usize) -> Result<Self> {
        Self::sample(0, seed, dt, n_steps)
    }

    /// Coupled path on the doubled step: increments are pairwise sums.
    pub fn coarsen(&self) -> Result<Self> {
        if !self.n_steps.is_multiple_of(2) || self.n_steps == 0 {
            return Err(Error::InvalidArgument(format!(
                "cannot coarsen a path with {} steps",
                self.n_steps
            )));
        }
        let increments = self
            .increments
            .iter()
            .map(|inc| inc.chunks_exact(2).map(|p| p[0] + p[1]).collect())
            .collect();
        Ok(Self::from_increments(
            self.seed,
            2.0 * self.dt,
            self.level + 1,
            self.n_steps / 2,
            increments,
        ))
    }

    pub fn n_modes(&self) -> usize {
        self.increments.len()
    }

    pub fn increment(&self, mode: usize, step: usize) -> f64 {
        self.increments[mode][step]
    }

    pub fn increments(&self, mode: usize) -> &[f64] {
        &self.increments[mode]
    }

    /// `beta_j(t_k) = sum_{i<k} dbeta_{j,i}`.
    pub fn beta(&self, mode: usize, step: usize) -> f64 {
        self.beta[mode][step]
    }

    pub fn time(&self, step: usize) -> f64 {
        step as f64 * self.dt
    }

    pub fn final_time(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }
}

/// `sample_path` in the free-function form used by the drivers.
pub fn sample_path(model: &NoiseModel, seed: u64, dt: f64, n_steps: usize) -> Result<BrownianPath> {
    BrownianPath::sample(model.len(), seed, dt, n_steps)
}
