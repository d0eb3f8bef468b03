use std::sync::Arc;

use approx::assert_relative_eq;
use num_complex::Complex64;
use proptest::prelude::*;

use snls_core::direct::{dispersion_step, nonlinear_step, PairState};
use snls_core::ensemble::derive_seed;
use snls_core::functionals::{energy_e, gn_ratio, mass_q, strichartz_admissible, FunctionalSample};
use snls_core::grid::{grad_inner, grad_norm_sq, l2_norm_sq, theta, theta_cutoff, ComplexField, Grid, GridSpec};
use snls_core::noise::BrownianPath;
use snls_core::params::SystemParams;
use snls_core::rescaled::{apply_a, apply_a_expanded};

fn grid(n: usize, l: f64) -> Arc<Grid> {
    Grid::new(GridSpec::new(1, n, l).unwrap()).unwrap()
}

/// Trigonometric polynomial with the given low-mode coefficients.
fn trig(grid: &Arc<Grid>, coeffs: &[(f64, f64)]) -> ComplexField {
    let half = coeffs.len() as i64 / 2;
    let l = grid.spec().box_length;
    ComplexField::from_fn(grid, |x| {
        coeffs
            .iter()
            .enumerate()
            .map(|(i, &(re, im))| {
                let k = i as i64 - half;
                Complex64::new(re, im) * Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 * x[0] / l)
            })
            .sum()
    })
}

fn coeffs(max: f64) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-max..max, -max..max), 7)
}

fn field_values(n: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64), n)
}

fn params() -> impl Strategy<Value = SystemParams> {
    (0.3..3.0f64, 0.3..3.0f64, -2.0..2.0f64, -2.0..2.0f64, prop_oneof![-3.0..-0.2f64, 0.2..3.0f64])
        .prop_map(|(ell, big_l, kr, ki, c)| SystemParams::compatible(ell, big_l, Complex64::new(kr, ki), c))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fft_roundtrip(vals in field_values(32)) {
        let g = grid(32, 5.0);
        let f = ComplexField::from_values(&g, vals.iter().map(|&(a, b)| Complex64::new(a, b)).collect()).unwrap();
        let back = ComplexField::from_spectrum(&g, f.spectrum()).unwrap();
        prop_assert!(f.sub(&back).max_abs() <= 1e-12 * (1.0 + f.max_abs()));
    }

    #[test]
    fn parseval(vals in field_values(32)) {
        let g = grid(32, 3.0);
        let f = ComplexField::from_values(&g, vals.iter().map(|&(a, b)| Complex64::new(a, b)).collect()).unwrap();
        let spectral: f64 = f.spectrum().iter().map(|c| c.norm_sqr()).sum::<f64>() * g.spec().cell_volume() / 32.0;
        assert_relative_eq!(spectral, l2_norm_sq(&f), max_relative = 1e-12);
        assert_relative_eq!(grad_inner(&f, &f).unwrap().re, grad_norm_sq(&f), max_relative = 1e-10, epsilon = 1e-12);
    }

    #[test]
    fn theta_is_a_monotone_cutoff(a in 0.0..3.0f64, b in 0.0..3.0f64) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(theta(lo) >= theta(hi));
        prop_assert!((0.0..=1.0).contains(&theta(a)));
        prop_assert_eq!(theta(a), theta(-a));
        if a <= 1.0 { prop_assert_eq!(theta(a), 1.0); }
        if a >= 2.0 { prop_assert_eq!(theta(a), 0.0); }
    }

    #[test]
    fn theta_cutoff_never_increases_mass(c in coeffs(1.0), m in 1usize..6) {
        let g = grid(64, 2.0 * std::f64::consts::PI);
        let f = trig(&g, &c);
        let cut = theta_cutoff(&f, m).unwrap();
        prop_assert!(l2_norm_sq(&cut) <= l2_norm_sq(&f) * (1.0 + 1e-12) + 1e-15);
    }

    #[test]
    fn gn_ratio_is_scale_invariant(c in coeffs(1.0), s in 0.05..20.0f64) {
        let g = grid(64, 6.0);
        let f = trig(&g, &c);
        prop_assume!(grad_norm_sq(&f) > 1e-6);
        let a = gn_ratio(&f).unwrap();
        let b = gn_ratio(&f.scale(Complex64::new(0.0, s))).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-10);
    }

    #[test]
    fn derived_seeds_distinct(base in any::<u64>(), i in any::<u64>(), j in any::<u64>()) {
        prop_assume!(i != j);
        prop_assert_ne!(derive_seed(base, i), derive_seed(base, j));
    }

    #[test]
    fn coarsened_path_matches_fine_path(seed in any::<u64>(), modes in 1usize..4, half in 1usize..40) {
        let fine = BrownianPath::sample(modes, seed, 1e-3, 2 * half).unwrap();
        let coarse = fine.coarsen().unwrap();
        for j in 0..modes {
            for k in 0..=half {
                assert_relative_eq!(coarse.beta(j, k), fine.beta(j, 2 * k), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn dispersion_preserves_mass_and_kinetic(c1 in coeffs(1.0), c2 in coeffs(1.0), p in params(), tau in -1.0..1.0f64) {
        let g = grid(64, 7.0);
        let s = PairState::new(trig(&g, &c1), trig(&g, &c2), 0.0).unwrap();
        let out = dispersion_step(&s, &p, tau).unwrap();
        let before = FunctionalSample::compute(0.0, &s.u, &s.v, &p);
        let after = FunctionalSample::compute(0.0, &out.u, &out.v, &p);
        assert_relative_eq!(before.q, after.q, max_relative = 1e-12);
        assert_relative_eq!(before.k, after.k, max_relative = 1e-11, epsilon = 1e-12);
    }

    #[test]
    fn nonlinear_substep_conserves_mass(c1 in coeffs(0.5), c2 in coeffs(0.5), p in params()) {
        let g = grid(32, 4.0);
        let s = PairState::new(trig(&g, &c1), trig(&g, &c2), 0.0).unwrap();
        let out = nonlinear_step(&s, &p, 1e-3).unwrap();
        let q0 = mass_q(&s.u, &s.v, p.c).unwrap();
        let q1 = mass_q(&out.u, &out.v, p.c).unwrap();
        prop_assert!((q1 - q0).abs() <= 1e-10 * q0.max(1.0));
    }

    #[test]
    fn mass_and_energy_are_gauge_invariant(c1 in coeffs(1.0), c2 in coeffs(1.0), p in params(), phase in 0.0..6.3f64) {
        let g = grid(64, 5.0);
        let (u, v) = (trig(&g, &c1), trig(&g, &c2));
        let e1 = Complex64::from_polar(1.0, phase);
        let (gu, gv) = (u.scale(e1), v.scale(e1 * e1));
        assert_relative_eq!(mass_q(&u, &v, p.c).unwrap(), mass_q(&gu, &gv, p.c).unwrap(), max_relative = 1e-12);
        assert_relative_eq!(energy_e(&u, &v, &p).unwrap(), energy_e(&gu, &gv, &p).unwrap(), max_relative = 1e-9, epsilon = 1e-10);
    }

    #[test]
    fn operator_forms_agree(cw in coeffs(0.15), cy in coeffs(1.0), cm in coeffs(0.5), mass in 0.2..5.0f64) {
        // e^W y must be resolved: its spectrum decays like |W|^(k/3) / (k/3)!
        let g = grid(128, 2.0 * std::f64::consts::PI);
        let (w, y, mu) = (trig(&g, &cw), trig(&g, &cy), trig(&g, &cm));
        let mu_t = mu.mul(&mu).scale(Complex64::from(0.5));
        let a = apply_a(&y, &w, mass, &mu, &mu_t).unwrap();
        let b = apply_a_expanded(&y, &w, mass, &mu, &mu_t).unwrap();
        prop_assert!((l2_norm_sq(&a.sub(&b))).sqrt() <= 1e-9 * (1.0 + l2_norm_sq(&a).sqrt()));
    }

    #[test]
    fn admissible_pairs_from_relation(d in 1usize..4, inv_p in 0.0..0.5f64) {
        let p = if inv_p == 0.0 { f64::INFINITY } else { 1.0 / inv_p };
        let two_over_q = d as f64 / 2.0 - d as f64 * inv_p;
        prop_assume!((0.0..=1.0).contains(&two_over_q));
        let q = if two_over_q == 0.0 { f64::INFINITY } else { 2.0 / two_over_q };
        let excluded = d == 2 && (p.is_infinite() || q == 2.0);
        prop_assert_eq!(strichartz_admissible(d, p, q).is_ok(), !excluded);
        prop_assert!(strichartz_admissible(d, p, q * 1.1 + 0.1).is_err());
    }
}
