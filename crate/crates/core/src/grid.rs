//! Periodic spectral grid, complex lattice fields and Fourier-multiplier calculus.
//!
//! The box is `[0, L)^d` with `n` points per axis. The forward transform is
//! unnormalized and the inverse carries `1/n^d`; every quadrature multiplies by
//! the cell volume `(L/n)^d`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    pub points_per_dim: usize,
    pub box_length: f64,
}

impl GridSpec {
    pub fn new(dim: usize, points_per_dim: usize, box_length: f64) -> Result<Self> {
        let spec = GridSpec {
            dim,
            points_per_dim,
            box_length,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.dim) {
            return Err(Error::InvalidGrid(format!(
                "dim must be 1, 2 or 3 (got {})",
                self.dim
            )));
        }
        if self.points_per_dim < 8 || !self.points_per_dim.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "points_per_dim must be a power of two >= 8 (got {})",
                self.points_per_dim
            )));
        }
        if !(self.box_length.is_finite() && self.box_length > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "box_length must be positive (got {})",
                self.box_length
            )));
        }
        Ok(())
    }

    pub fn total_points(&self) -> usize {
        self.points_per_dim.pow(self.dim as u32)
    }

    pub fn spacing(&self) -> f64 {
        self.box_length / self.points_per_dim as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    pub fn box_volume(&self) -> f64 {
        self.box_length.powi(self.dim as i32)
    }

    /// Largest resolved wavenumber per axis, `pi n / L`.
    pub fn k_max(&self) -> f64 {
        PI * self.points_per_dim as f64 / self.box_length
    }

    /// Largest `|k|^2` on the grid (all axes at Nyquist).
    pub fn max_k_squared(&self) -> f64 {
        self.dim as f64 * self.k_max().powi(2)
    }
}

/// A grid together with its FFT plans and wavenumber tables.
pub struct Grid {
    spec: GridSpec,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// Derivative wavenumbers along one axis, Nyquist entry zeroed.
    k_deriv: Vec<f64>,
    /// Squared wavenumbers along one axis, Nyquist entry kept.
    k_sq_axis: Vec<f64>,
    /// `|k|^2` at every flat index.
    k_sq: Vec<f64>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid").field("spec", &self.spec).finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
    }
}

impl Grid {
    pub fn new(spec: GridSpec) -> Result<Arc<Grid>> {
        spec.validate()?;
        let n = spec.points_per_dim;
        let mut planner = FftPlanner::<f64>::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);

        let dk = 2.0 * PI / spec.box_length;
        let signed = |i: usize| -> i64 {
            if i <= n / 2 {
                i as i64
            } else {
                i as i64 - n as i64
            }
        };
        let k_deriv: Vec<f64> = (0..n)
            .map(|i| if i == n / 2 { 0.0 } else { dk * signed(i) as f64 })
            .collect();
        let k_sq_axis: Vec<f64> = (0..n).map(|i| (dk * signed(i) as f64).powi(2)).collect();

        let mut grid = Grid {
            spec,
            forward,
            inverse,
            k_deriv,
            k_sq_axis,
            k_sq: Vec::new(),
        };
        let total = spec.total_points();
        grid.k_sq = (0..total)
            .map(|idx| {
                (0..spec.dim)
                    .map(|a| grid.k_sq_axis[grid.axis_index(idx, a)])
                    .sum()
            })
            .collect();
        Ok(Arc::new(grid))
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.k_sq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k_sq.is_empty()
    }

    fn stride(&self, axis: usize) -> usize {
        self.spec
            .points_per_dim
            .pow((self.spec.dim - 1 - axis) as u32)
    }

    /// Index along `axis` of the flat (row-major) index `idx`.
    pub fn axis_index(&self, idx: usize, axis: usize) -> usize {
        (idx / self.stride(axis)) % self.spec.points_per_dim
    }

    /// Physical coordinates of the point with flat index `idx`.
    pub fn coords(&self, idx: usize) -> [f64; 3] {
        let h = self.spec.spacing();
        let mut x = [0.0; 3];
        for (a, xa) in x.iter_mut().enumerate().take(self.spec.dim) {
            *xa = self.axis_index(idx, a) as f64 * h;
        }
        x
    }

    /// Derivative wavenumber along `axis` at flat index `idx` (zero at Nyquist).
    pub fn k_component(&self, idx: usize, axis: usize) -> f64 {
        self.k_deriv[self.axis_index(idx, axis)]
    }

    /// Derivative wavenumbers of one axis; zero mean, Nyquist entry zeroed.
    pub fn wavenumbers(&self) -> &[f64] {
        &self.k_deriv
    }

    pub fn k_squared(&self) -> &[f64] {
        &self.k_sq
    }

    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        let n = self.spec.points_per_dim;
        let plan = if inverse { &self.inverse } else { &self.forward };
        let mut scratch = vec![ZERO; plan.get_inplace_scratch_len()];
        let mut line = vec![ZERO; n];
        for axis in 0..self.spec.dim {
            let stride = self.stride(axis);
            if stride == 1 {
                for chunk in data.chunks_exact_mut(n) {
                    plan.process_with_scratch(chunk, &mut scratch);
                }
                continue;
            }
            let block = stride * n;
            for outer in (0..data.len()).step_by(block) {
                for inner in 0..stride {
                    let base = outer + inner;
                    for (i, l) in line.iter_mut().enumerate() {
                        *l = data[base + i * stride];
                    }
                    plan.process_with_scratch(&mut line, &mut scratch);
                    for (i, l) in line.iter().enumerate() {
                        data[base + i * stride] = *l;
                    }
                }
            }
        }
        if inverse {
            let scale = 1.0 / data.len() as f64;
            data.iter_mut().for_each(|z| *z *= scale);
        }
    }
}

/// Complex amplitude per grid point.
#[derive(Debug, Clone)]
pub struct ComplexField {
    grid: Arc<Grid>,
    values: Vec<Complex64>,
}

impl PartialEq for ComplexField {
    fn eq(&self, other: &Self) -> bool {
        self.grid == other.grid && self.values == other.values
    }
}

impl ComplexField {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        ComplexField {
            grid: grid.clone(),
            values: vec![ZERO; grid.len()],
        }
    }

    pub fn constant(grid: &Arc<Grid>, value: Complex64) -> Self {
        ComplexField {
            grid: grid.clone(),
            values: vec![value; grid.len()],
        }
    }

    pub fn from_values(grid: &Arc<Grid>, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "field has {} values, grid has {} points",
                values.len(),
                grid.len()
            )));
        }
        Ok(ComplexField {
            grid: grid.clone(),
            values,
        })
    }

    /// Samples `f` at every grid point; `f` receives the coordinates `[x, y, z]`
    /// (unused axes are zero).
    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(&[f64; 3]) -> Complex64) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.coords(i))).collect();
        ComplexField {
            grid: grid.clone(),
            values,
        }
    }

    pub fn from_spectrum(grid: &Arc<Grid>, mut coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(Error::InvalidArgument("spectrum length mismatch".into()));
        }
        grid.transform(&mut coeffs, true);
        Ok(ComplexField {
            grid: grid.clone(),
            values: coeffs,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn spec(&self) -> &GridSpec {
        &self.grid.spec
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn same_grid(&self, other: &ComplexField) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || self.grid == other.grid
    }

    pub fn check_same_grid(&self, other: &ComplexField) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Unnormalized forward DFT coefficients.
    pub fn spectrum(&self) -> Vec<Complex64> {
        let mut c = self.values.clone();
        self.grid.transform(&mut c, false);
        c
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        ComplexField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&z| f(z)).collect(),
        }
    }

    /// Pointwise combination; panics if the grids differ (use `check_same_grid`
    /// first on untrusted input).
    pub fn zip_map(
        &self,
        other: &ComplexField,
        f: impl Fn(Complex64, Complex64) -> Complex64,
    ) -> Self {
        assert!(self.same_grid(other), "zip_map on mismatched grids");
        ComplexField {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn add(&self, other: &ComplexField) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ComplexField) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &ComplexField) -> Self {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, s: Complex64) -> Self {
        self.map(|z| z * s)
    }

    pub fn conj(&self) -> Self {
        self.map(|z| z.conj())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_im(&self) -> f64 {
        self.values.iter().map(|z| z.im.abs()).fold(0.0, f64::max)
    }

    pub fn max_re(&self) -> f64 {
        self.values
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `sum f * cellvol` over the box.
    pub fn integral(&self) -> Complex64 {
        self.values.iter().sum::<Complex64>() * self.spec().cell_volume()
    }

    fn apply_multiplier(&self, symbol: impl Fn(usize) -> Complex64) -> Self {
        let mut c = self.spectrum();
        for (idx, z) in c.iter_mut().enumerate() {
            *z *= symbol(idx);
        }
        self.grid.transform(&mut c, true);
        ComplexField {
            grid: self.grid.clone(),
            values: c,
        }
    }

    /// Applies the real Fourier multiplier `symbol(|k|^2)`.
    pub fn fourier_multiplier(&self, symbol: impl Fn(f64) -> Complex64) -> Self {
        let ksq = &self.grid.k_sq;
        self.apply_multiplier(|idx| symbol(ksq[idx]))
    }
}

pub fn laplacian(f: &ComplexField) -> ComplexField {
    f.fourier_multiplier(|ksq| Complex64::new(-ksq, 0.0))
}

/// Spectral partial derivative along `axis`.
pub fn partial(f: &ComplexField, axis: usize) -> ComplexField {
    let grid = f.grid.clone();
    f.apply_multiplier(|idx| Complex64::new(0.0, grid.k_component(idx, axis)))
}

pub fn gradient(f: &ComplexField) -> Vec<ComplexField> {
    (0..f.spec().dim).map(|a| partial(f, a)).collect()
}

pub fn lp_norm(f: &ComplexField, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::InvalidExponent(p));
    }
    if p.is_infinite() {
        return Ok(f.max_abs());
    }
    let cell = f.spec().cell_volume();
    let s: f64 = if p == 2.0 {
        f.values.iter().map(|z| z.norm_sqr()).sum()
    } else {
        f.values.iter().map(|z| z.norm().powf(p)).sum()
    };
    Ok((s * cell).powf(1.0 / p))
}

pub fn l2_norm_sq(f: &ComplexField) -> f64 {
    f.values.iter().map(|z| z.norm_sqr()).sum::<f64>() * f.spec().cell_volume()
}

/// `<f, g> = int f conj(g)`.
pub fn inner(f: &ComplexField, g: &ComplexField) -> Result<Complex64> {
    f.check_same_grid(g)?;
    let s: Complex64 = f
        .values
        .iter()
        .zip(&g.values)
        .map(|(a, b)| a * b.conj())
        .sum();
    Ok(s * f.spec().cell_volume())
}

/// `||grad f||^2` computed as `-<f, lap f>`, i.e. the spectral sum of `|k|^2 |f_k|^2`.
pub fn grad_norm_sq(f: &ComplexField) -> f64 {
    let spec = f.spec();
    let c = f.spectrum();
    let s: f64 = c
        .iter()
        .zip(&f.grid.k_sq)
        .map(|(z, k2)| k2 * z.norm_sqr())
        .sum();
    s * spec.cell_volume() / spec.total_points() as f64
}

/// `<grad f, grad g> = -<f, lap g>`, consistent with [`grad_norm_sq`].
pub fn grad_inner(f: &ComplexField, g: &ComplexField) -> Result<Complex64> {
    f.check_same_grid(g)?;
    let spec = f.spec();
    let (a, b) = (f.spectrum(), g.spectrum());
    let s: Complex64 = a
        .iter()
        .zip(&b)
        .zip(&f.grid.k_sq)
        .map(|((x, y), k2)| k2 * x * y.conj())
        .sum();
    Ok(s * spec.cell_volume() / spec.total_points() as f64)
}

pub fn h1_norm(f: &ComplexField) -> f64 {
    (l2_norm_sq(f) + grad_norm_sq(f)).sqrt()
}

/// Smooth transition `theta(x) = 1` for `|x| <= 1`, `0` for `|x| >= 2`,
/// built from the `exp(-1/t)` partition of unity so it is `C^inf`.
pub fn theta(x: f64) -> f64 {
    fn g(t: f64) -> f64 {
        if t > 0.0 {
            (-1.0 / t).exp()
        } else {
            0.0
        }
    }
    let a = x.abs();
    if a <= 1.0 {
        return 1.0;
    }
    if a >= 2.0 {
        return 0.0;
    }
    let up = g(2.0 - a);
    up / (up + g(a - 1.0))
}

/// Human-readable description of [`theta`], written to run manifests.
pub const THETA_DESCRIPTION: &str =
    "theta(x) = g(2-|x|)/(g(2-|x|)+g(|x|-1)), g(t) = exp(-1/t) for t > 0 else 0";

/// Fourier multiplier `theta(|k| / m)`.
pub fn theta_cutoff(f: &ComplexField, m: usize) -> Result<ComplexField> {
    if m == 0 {
        return Err(Error::InvalidArgument("cutoff level m must be >= 1".into()));
    }
    let m = m as f64;
    Ok(f.fourier_multiplier(|ksq| Complex64::new(theta(ksq.sqrt() / m), 0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid1(n: usize, l: f64) -> Arc<Grid> {
        Grid::new(GridSpec::new(1, n, l).unwrap()).unwrap()
    }

    fn plane(grid: &Arc<Grid>, k: f64) -> ComplexField {
        ComplexField::from_fn(grid, |x| Complex64::new(0.0, k * x[0]).exp())
    }

    fn max_diff(a: &ComplexField, b: &ComplexField) -> f64 {
        a.sub(b).max_abs()
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(GridSpec::new(0, 16, 1.0).is_err());
        assert!(GridSpec::new(4, 16, 1.0).is_err());
        assert!(GridSpec::new(1, 12, 1.0).is_err());
        assert!(GridSpec::new(1, 4, 1.0).is_err());
        assert!(GridSpec::new(1, 16, 0.0).is_err());
        assert!(GridSpec::new(1, 16, f64::NAN).is_err());
    }

    #[test]
    fn wavenumbers_have_zero_mean_and_kmax() {
        for &(n, l) in &[(8usize, 1.0), (64, 2.0 * PI), (128, 20.0)] {
            let g = grid1(n, l);
            let sum: f64 = g.wavenumbers().iter().sum();
            assert!(sum.abs() < 1e-9);
            let max_sq = g.k_squared().iter().cloned().fold(0.0, f64::max);
            assert_relative_eq!(max_sq.sqrt(), PI * n as f64 / l, max_relative = 1e-14);
            assert_relative_eq!(g.spec().k_max(), PI * n as f64 / l);
        }
        let g3 = Grid::new(GridSpec::new(3, 8, 1.0).unwrap()).unwrap();
        assert_eq!(g3.len(), 512);
    }

    #[test]
    fn laplacian_of_constant_vanishes() {
        let g = grid1(32, 2.0 * PI);
        let f = ComplexField::constant(&g, Complex64::new(1.5, -0.5));
        assert!(laplacian(&f).max_abs() < 1e-13);
    }

    #[test]
    fn laplacian_plane_waves() {
        let g = grid1(32, 2.0 * PI);
        let f = plane(&g, 1.0);
        assert!(max_diff(&laplacian(&f), &f.scale((-1.0).into())) < 1e-12);

        let f = plane(&g, 2.0).add(&plane(&g, -3.0));
        let expected = plane(&g, 2.0)
            .scale((-4.0).into())
            .add(&plane(&g, -3.0).scale((-9.0).into()));
        assert!(max_diff(&laplacian(&f), &expected) < 1e-11);
    }

    #[test]
    fn gradient_plane_wave_and_constant() {
        let g = grid1(16, 2.0 * PI);
        let f = plane(&g, 1.0);
        let df = gradient(&f);
        assert_eq!(df.len(), 1);
        assert!(max_diff(&df[0], &f.scale(Complex64::i())) < 1e-12);
        let c = ComplexField::constant(&g, Complex64::new(2.0, 1.0));
        assert!(gradient(&c)[0].max_abs() < 1e-13);
    }

    #[test]
    fn gradient_in_2d_acts_per_axis() {
        let g = Grid::new(GridSpec::new(2, 16, 2.0 * PI).unwrap()).unwrap();
        // f = exp(i(2x + 3y))
        let f = ComplexField::from_fn(&g, |x| Complex64::new(0.0, 2.0 * x[0] + 3.0 * x[1]).exp());
        let df = gradient(&f);
        assert!(max_diff(&df[0], &f.scale(Complex64::new(0.0, 2.0))) < 1e-11);
        assert!(max_diff(&df[1], &f.scale(Complex64::new(0.0, 3.0))) < 1e-11);
        assert!(max_diff(&laplacian(&f), &f.scale((-13.0).into())) < 1e-10);
    }

    #[test]
    fn lp_norm_cases() {
        let g = grid1(64, 3.0);
        let z = ComplexField::zeros(&g);
        for p in [1.0, 2.0, 3.5, f64::INFINITY] {
            assert_eq!(lp_norm(&z, p).unwrap(), 0.0);
        }
        let a = 0.7;
        let f = ComplexField::from_fn(&g, |x| Complex64::from_polar(a, x[0]));
        for p in [1.0, 2.0, 3.0, 6.0] {
            assert_relative_eq!(lp_norm(&f, p).unwrap(), a * 3f64.powf(1.0 / p), max_relative = 1e-13);
        }
        assert_relative_eq!(lp_norm(&f, f64::INFINITY).unwrap(), a, max_relative = 1e-14);
        assert!(matches!(lp_norm(&f, 0.5), Err(Error::InvalidExponent(_))));
        assert!(lp_norm(&f, f64::NAN).is_err());
    }

    #[test]
    fn gaussian_l2_norm() {
        // box [0, 40) with the Gaussian centred at 20; int exp(-x^2) = sqrt(pi)
        let g = grid1(256, 40.0);
        let f = ComplexField::from_fn(&g, |x| (-(x[0] - 20.0).powi(2) / 2.0).exp().into());
        let expected = PI.powf(0.25);
        assert!((lp_norm(&f, 2.0).unwrap() - expected).abs() < 1e-8);
    }

    #[test]
    fn inner_product_cases() {
        let g = grid1(32, 2.0 * PI);
        let f = plane(&g, 1.0);
        let h = plane(&g, 2.0);
        assert!(inner(&f, &h).unwrap().norm() < 1e-12);
        let ff = inner(&f, &f).unwrap();
        assert!(ff.im.abs() < 1e-14);
        assert_relative_eq!(ff.re, lp_norm(&f, 2.0).unwrap().powi(2), max_relative = 1e-13);

        let other = grid1(16, 2.0 * PI);
        let k = ComplexField::zeros(&other);
        assert_eq!(inner(&f, &k), Err(Error::GridMismatch));
    }

    #[test]
    fn theta_profile() {
        assert_eq!(theta(0.0), 1.0);
        assert_eq!(theta(1.0), 1.0);
        assert_eq!(theta(-0.5), 1.0);
        assert_eq!(theta(2.0), 0.0);
        assert_eq!(theta(2.5), 0.0);
        assert!((theta(1.5) - 0.5).abs() < 1e-15);
        let mut prev = 1.0;
        for i in 0..=100 {
            let t = theta(1.0 + i as f64 / 100.0);
            assert!(t <= prev + 1e-15 && (0.0..=1.0).contains(&t));
            prev = t;
        }
    }

    #[test]
    fn theta_cutoff_band_limits() {
        let g = grid1(64, 2.0 * PI);
        // |k| <= m passes unchanged
        let f = plane(&g, 3.0).add(&plane(&g, -2.0));
        assert!(max_diff(&theta_cutoff(&f, 3).unwrap(), &f) < 1e-12);
        // |k| > 2m removed
        let h = plane(&g, 7.0);
        assert!(theta_cutoff(&h, 3).unwrap().max_abs() < 1e-13);
        assert!(theta_cutoff(&h, 0).is_err());
    }
}
