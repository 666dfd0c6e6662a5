//! Exponential-family building blocks.
//!
//! Each response family is described by its cumulant function `b(η)` on the
//! natural-parameter scale. The model only ever needs `b`, `b′` (the canonical
//! inverse link) and `b″` (the unscaled variance), together with the
//! log-likelihood kernel `y·η − b(η)`. The normalizer `c(y; φ)` cancels in every
//! likelihood ratio and is not represented.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{GsimError, Result};

/// Response family with canonical link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gaussian,
    Binomial,
    Poisson,
    Gamma,
}

/// How the dispersion parameter is obtained for a family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DispersionPolicy {
    /// Dispersion is known to be one.
    FixedOne,
    /// Dispersion is estimated from Pearson residuals.
    Estimated,
}

impl Family {
    pub const ALL: [Family; 4] = [
        Family::Gaussian,
        Family::Binomial,
        Family::Poisson,
        Family::Gamma,
    ];

    pub fn dispersion_policy(self) -> DispersionPolicy {
        match self {
            Family::Binomial | Family::Poisson => DispersionPolicy::FixedOne,
            Family::Gaussian | Family::Gamma => DispersionPolicy::Estimated,
        }
    }

    /// Whether `eta` lies in the natural-parameter domain.
    #[inline]
    pub fn in_domain(self, eta: f64) -> bool {
        match self {
            Family::Gamma => eta < 0.0 && eta.is_finite(),
            _ => eta.is_finite(),
        }
    }

    #[inline]
    fn check(self, eta: f64) -> Result<()> {
        if self.in_domain(eta) {
            Ok(())
        } else {
            Err(GsimError::Domain(format!(
                "natural parameter {eta} outside the {self} domain"
            )))
        }
    }

    /// Cumulant function `b(η)`.
    pub fn cumulant(self, eta: f64) -> Result<f64> {
        self.check(eta)?;
        Ok(match self {
            Family::Gaussian => 0.5 * eta * eta,
            Family::Binomial => softplus(eta),
            Family::Poisson => eta.exp(),
            Family::Gamma => -(-eta).ln(),
        })
    }

    /// Conditional mean `b′(η)`.
    pub fn mean(self, eta: f64) -> Result<f64> {
        self.check(eta)?;
        Ok(match self {
            Family::Gaussian => eta,
            Family::Binomial => logistic(eta),
            Family::Poisson => eta.exp(),
            Family::Gamma => -1.0 / eta,
        })
    }

    /// Unscaled variance `b″(η)`.
    pub fn variance_unscaled(self, eta: f64) -> Result<f64> {
        self.check(eta)?;
        Ok(match self {
            Family::Gaussian => 1.0,
            Family::Binomial => logistic(eta) * logistic(-eta),
            Family::Poisson => eta.exp(),
            Family::Gamma => 1.0 / (eta * eta),
        })
    }

    /// Per-observation log-likelihood kernel `y·η − b(η)`.
    pub fn loglik_kernel(self, y: f64, eta: f64) -> Result<f64> {
        self.validate_response(y)?;
        Ok(y * eta - self.cumulant(eta)?)
    }

    /// Checks that a response value is admissible for the family.
    pub fn validate_response(self, y: f64) -> Result<()> {
        let ok = match self {
            Family::Gaussian => y.is_finite(),
            Family::Binomial => y == 0.0 || y == 1.0,
            Family::Poisson => y >= 0.0 && y.is_finite() && y.fract() == 0.0,
            Family::Gamma => y > 0.0 && y.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(GsimError::Data(format!(
                "response value {y} is not valid for the {self} family"
            )))
        }
    }

    /// Saturated kernel `sup_η {y·η − b(η)}`, attained at `μ = y`.
    pub fn saturated_kernel(self, y: f64) -> f64 {
        match self {
            Family::Gaussian => 0.5 * y * y,
            Family::Binomial => 0.0,
            Family::Poisson if y == 0.0 => 0.0,
            Family::Poisson => y * y.ln() - y,
            Family::Gamma => -1.0 - y.ln(),
        }
    }

    /// Unit deviance `2{sat(y) − (y·η − b(η))}`.
    pub fn unit_deviance(self, y: f64, eta: f64) -> Result<f64> {
        Ok((2.0 * (self.saturated_kernel(y) - self.loglik_kernel(y, eta)?)).max(0.0))
    }

    /// Canonical link `η = (b′)⁻¹(μ)`, used to start iterative fits.
    pub fn canonical_link(self, mu: f64) -> f64 {
        match self {
            Family::Gaussian => mu,
            Family::Binomial => (mu / (1.0 - mu)).ln(),
            Family::Poisson => mu.ln(),
            Family::Gamma => -1.0 / mu,
        }
    }

    /// Pulls a response value into the interior of the mean space so that
    /// `canonical_link` is finite.
    pub fn starting_mean(self, y: f64) -> f64 {
        match self {
            Family::Gaussian => y,
            Family::Binomial => 0.25 + 0.5 * y,
            Family::Poisson => y + 0.5,
            Family::Gamma => y.max(1e-8),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Gaussian => "gaussian",
            Family::Binomial => "binomial",
            Family::Poisson => "poisson",
            Family::Gamma => "gamma",
        })
    }
}

impl FromStr for Family {
    type Err = GsimError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(Family::Gaussian),
            "binomial" | "binary" => Ok(Family::Binomial),
            "poisson" => Ok(Family::Poisson),
            "gamma" => Ok(Family::Gamma),
            other => Err(GsimError::Usage(format!("unknown family `{other}`"))),
        }
    }
}

/// `log(1 + exp(x))` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `1 / (1 + exp(-x))` without overflow.
#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cumulant_values() {
        assert_eq!(Family::Gaussian.cumulant(2.0).unwrap(), 2.0);
        assert_relative_eq!(
            Family::Binomial.cumulant(0.0).unwrap(),
            std::f64::consts::LN_2,
            epsilon = 1e-15
        );
        assert_eq!(Family::Poisson.cumulant(0.0).unwrap(), 1.0);
        assert!(matches!(
            Family::Gamma.cumulant(0.0),
            Err(GsimError::Domain(_))
        ));
        assert!(Family::Gamma.cumulant(0.5).is_err());
    }

    #[test]
    fn mean_values() {
        assert_eq!(Family::Binomial.mean(0.0).unwrap(), 0.5);
        assert_eq!(Family::Gaussian.mean(-1.3).unwrap(), -1.3);
        assert_relative_eq!(
            Family::Poisson.mean(1.0).unwrap(),
            std::f64::consts::E,
            epsilon = 1e-15
        );
    }

    #[test]
    fn variance_values() {
        assert_eq!(Family::Gaussian.variance_unscaled(5.0).unwrap(), 1.0);
        assert_eq!(Family::Binomial.variance_unscaled(0.0).unwrap(), 0.25);
        assert_eq!(Family::Poisson.variance_unscaled(0.0).unwrap(), 1.0);
    }

    #[test]
    fn kernel_values() {
        assert_eq!(Family::Gaussian.loglik_kernel(1.0, 1.0).unwrap(), 0.5);
        assert_relative_eq!(
            Family::Binomial.loglik_kernel(1.0, 0.0).unwrap(),
            -std::f64::consts::LN_2,
            epsilon = 1e-15
        );
        assert_eq!(Family::Poisson.loglik_kernel(2.0, 0.0).unwrap(), -1.0);
    }

    #[test]
    fn invalid_responses_are_data_errors() {
        for (fam, y) in [
            (Family::Binomial, 0.5),
            (Family::Binomial, 2.0),
            (Family::Poisson, -1.0),
            (Family::Poisson, 1.5),
            (Family::Gamma, 0.0),
            (Family::Gaussian, f64::NAN),
        ] {
            assert!(matches!(fam.loglik_kernel(y, -0.5), Err(GsimError::Data(_))));
        }
    }

    #[test]
    fn binomial_cumulant_is_overflow_safe() {
        let mut prev = f64::NEG_INFINITY;
        for i in -700..=700 {
            let b = Family::Binomial.cumulant(i as f64).unwrap();
            assert!(b.is_finite());
            assert!(b >= prev);
            prev = b;
        }
        assert_relative_eq!(Family::Binomial.cumulant(700.0).unwrap(), 700.0);
        let v = Family::Binomial.variance_unscaled(-700.0).unwrap();
        assert!(v >= 0.0 && v.is_finite());
    }

    fn eta_grid(family: Family) -> Vec<f64> {
        (0..100)
            .map(|i| {
                let t = i as f64 / 99.0;
                match family {
                    Family::Gamma => -0.05 - 4.0 * t,
                    Family::Poisson => -5.0 + 8.0 * t,
                    _ => -8.0 + 16.0 * t,
                }
            })
            .collect()
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for fam in Family::ALL {
            for eta in eta_grid(fam) {
                let h = 1e-5 * (eta.abs() + 1.0);
                let h = match fam {
                    Family::Gamma => h.min(-eta / 4.0),
                    _ => h,
                };
                let db = (fam.cumulant(eta + h).unwrap() - fam.cumulant(eta - h).unwrap())
                    / (2.0 * h);
                let m = fam.mean(eta).unwrap();
                assert!(
                    (db - m).abs() <= 1e-6 * m.abs().max(1e-3),
                    "{fam} b' at {eta}: {db} vs {m}"
                );
                let dm = (fam.mean(eta + h).unwrap() - fam.mean(eta - h).unwrap()) / (2.0 * h);
                let v = fam.variance_unscaled(eta).unwrap();
                assert!(v > 0.0);
                assert!(
                    (dm - v).abs() <= 1e-5 * v.abs().max(1e-3),
                    "{fam} b'' at {eta}: {dm} vs {v}"
                );
            }
        }
    }

    #[test]
    fn kernel_is_concave() {
        for fam in Family::ALL {
            let y = match fam {
                Family::Binomial => 1.0,
                Family::Poisson => 3.0,
                Family::Gamma => 0.7,
                Family::Gaussian => -0.4,
            };
            let grid = eta_grid(fam);
            for w in grid.windows(3) {
                let [a, b, c] = [w[0], w[1], w[2]];
                let second = fam.loglik_kernel(y, a).unwrap() - 2.0 * fam.loglik_kernel(y, b).unwrap()
                    + fam.loglik_kernel(y, c).unwrap();
                assert!(second <= 1e-10, "{fam}: {second}");
            }
        }
    }

    #[test]
    fn family_parse_roundtrip() {
        for fam in Family::ALL {
            assert_eq!(fam.to_string().parse::<Family>().unwrap(), fam);
        }
        assert!("weibull".parse::<Family>().is_err());
    }
}
