//! Physical and coupling parameters.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::noise::NoiseModel;

/// Relative tolerance on `|lambda - c conj(kappa)|`.
pub const COMPAT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Mass parameter of the `u` component.
    pub ell: f64,
    /// Mass parameter of the `v` component.
    #[serde(rename = "L")]
    pub big_l: f64,
    pub lambda: Complex64,
    pub kappa: Complex64,
    pub c: f64,
}

/// Outcome of a successful [`SystemParams::validate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompatReport {
    /// `|lambda - c conj(kappa)|`.
    pub residual: f64,
    pub compatible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub constraint: &'static str,
    pub detail: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.constraint, self.detail)
    }
}

impl SystemParams {
    pub fn new(ell: f64, big_l: f64, lambda: Complex64, kappa: Complex64, c: f64) -> Self {
        SystemParams {
            ell,
            big_l,
            lambda,
            kappa,
            c,
        }
    }

    /// Parameters with `lambda = c conj(kappa)` built in.
    pub fn compatible(ell: f64, big_l: f64, kappa: Complex64, c: f64) -> Self {
        Self::new(ell, big_l, kappa.conj() * c, kappa, c)
    }

    pub fn compat_residual(&self) -> f64 {
        (self.lambda - self.kappa.conj() * self.c).norm()
    }

    /// Checks positivity of the masses, `c != 0`, and (when `require_compat`)
    /// `lambda = c conj(kappa)` to relative [`COMPAT_TOL`]. Every failed
    /// constraint is reported.
    pub fn validate(&self, require_compat: bool) -> Result<CompatReport, Vec<Violation>> {
        let mut violations = Vec::new();
        if !(self.ell.is_finite() && self.ell > 0.0) {
            violations.push(Violation {
                constraint: "ell > 0",
                detail: format!("ell = {}", self.ell),
            });
        }
        if !(self.big_l.is_finite() && self.big_l > 0.0) {
            violations.push(Violation {
                constraint: "L > 0",
                detail: format!("L = {}", self.big_l),
            });
        }
        if !self.c.is_finite() || self.c == 0.0 {
            violations.push(Violation {
                constraint: "c != 0",
                detail: format!("c = {}", self.c),
            });
        }
        let finite = |z: Complex64| z.re.is_finite() && z.im.is_finite();
        if !finite(self.lambda) || !finite(self.kappa) {
            violations.push(Violation {
                constraint: "finite couplings",
                detail: format!("lambda = {}, kappa = {}", self.lambda, self.kappa),
            });
        }
        let residual = self.compat_residual();
        let scale = self.lambda.norm().max((self.kappa * self.c).norm());
        let compatible = residual <= COMPAT_TOL * scale || residual == 0.0;
        if require_compat && !compatible {
            violations.push(Violation {
                constraint: "lambda = c conj(kappa)",
                detail: format!("residual |lambda - c conj(kappa)| = {residual:e}"),
            });
        }
        if violations.is_empty() {
            Ok(CompatReport {
                residual,
                compatible,
            })
        } else {
            Err(violations)
        }
    }

    /// `Re mu_j = 0` for all `j`, or `c > 0` with `Re(mu_j) e_j <= 0` everywhere.
    pub fn h1_uniform_bound_condition(&self, model: &NoiseModel) -> bool {
        if model.is_conservative() {
            return true;
        }
        self.c > 0.0
            && model
                .modes()
                .iter()
                .all(|m| m.profile().values().iter().all(|e| m.mu.re * e.re <= 0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Grid, GridSpec};
    use crate::noise::{ModeShape, NoiseMode};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn unit_params_pass() {
        let p = SystemParams::new(1.0, 1.0, c(1.0, 0.0), c(1.0, 0.0), 1.0);
        let r = p.validate(true).unwrap();
        assert!(r.compatible);
        assert_eq!(r.residual, 0.0);
    }

    #[test]
    fn solved_linear_relation_passes() {
        // c conj(i) = -c i = 2i  =>  c = -2
        let p = SystemParams::new(1.0, 1.0, c(0.0, 2.0), c(0.0, 1.0), -2.0);
        assert!(p.validate(true).is_ok());
    }

    #[test]
    fn violation_reports_residual() {
        let p = SystemParams::new(1.0, 1.0, c(1.0, 0.0), c(1.0, 0.0), 2.0);
        let v = p.validate(true).unwrap_err();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].constraint, "lambda = c conj(kappa)");
        assert!((p.compat_residual() - 1.0).abs() < 1e-15);
        // without the flag only positivity is checked
        let r = p.validate(false).unwrap();
        assert!(!r.compatible);
    }

    #[test]
    fn all_violations_listed() {
        let p = SystemParams::new(-1.0, 0.0, c(1.0, 0.0), c(0.0, 1.0), 0.0);
        let v = p.validate(true).unwrap_err();
        let names: Vec<_> = v.iter().map(|x| x.constraint).collect();
        assert!(names.contains(&"ell > 0"));
        assert!(names.contains(&"L > 0"));
        assert!(names.contains(&"c != 0"));
        assert!(names.contains(&"lambda = c conj(kappa)"));
    }

    #[test]
    fn compatible_constructor() {
        let p = SystemParams::compatible(1.0, 0.5, c(0.3, -1.2), -1.5);
        assert!(p.validate(true).unwrap().compatible);
    }

    #[test]
    fn h1_condition_predicate() {
        let g = Grid::new(GridSpec::new(1, 16, 1.0).unwrap()).unwrap();
        let p = SystemParams::compatible(1.0, 1.0, c(1.0, 0.0), 1.0);
        let imag = NoiseModel::new(&g, vec![NoiseMode::new(&g, c(0.0, 1.0), ModeShape::cosine(1)).unwrap()])
            .unwrap();
        assert!(p.h1_uniform_bound_condition(&imag));
        let neg = NoiseModel::new(&g, vec![NoiseMode::new(&g, c(-1.0, 0.0), ModeShape::constant()).unwrap()])
            .unwrap();
        assert!(p.h1_uniform_bound_condition(&neg));
        let osc = NoiseModel::new(&g, vec![NoiseMode::new(&g, c(1.0, 0.0), ModeShape::cosine(1)).unwrap()])
            .unwrap();
        assert!(!p.h1_uniform_bound_condition(&osc));
    }
}
