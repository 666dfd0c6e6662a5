//! Seeded data generators for the simulation designs and Monte Carlo drivers
//! for Type-1 error and standard-error studies.
//!
//! Every replicate draws from its own counter-based ChaCha substreams keyed by
//! `(master seed, replicate index, stream role)`, so a study's numbers do not
//! depend on the order in which replicates run or on the number of workers.

mod report;
mod study;

pub use report::{
    clopper_pearson, CoefficientSummary, FailureRecord, RejectionCell, StudyReport, CELL_COLUMNS,
    COEFFICIENT_COLUMNS, REPORT_SCHEMA_VERSION,
};
pub use study::{run_study, se_study, type1_error_study, Method, StudyConfig, MAX_FAILURE_RATE};

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{GsimError, Result};
use crate::expfam::{logistic, Family};
use crate::fitter::FitConfig;
use crate::splines::BasisKind;

/// Data-generating model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Design {
    /// `y ~ N(sin(a xᵀβ), σ²)`, `x_ij ~ N(2, 1)`.
    GaussSin { a: f64 },
    /// `P(y = 1) = 1 − exp(−exp(xᵀβ))`, `x_ij ~ U(−2, 2)`.
    BinaryCloglog,
    /// `logit P(y = 1) = −0.05(0.5 − 4xᵀβ)² + 0.8`.
    BinaryUnimodal,
    /// `logit P(y = 1) = exp(5xᵀβ − 2)/(1 + exp(5xᵀβ − 3)) − 1.5`.
    BinaryMonotonic,
}

impl Design {
    pub fn family(&self) -> Family {
        match self {
            Design::GaussSin { .. } => Family::Gaussian,
            _ => Family::Binomial,
        }
    }

    /// Short name used in reports and on the command line.
    pub fn name(&self) -> &'static str {
        match self {
            Design::GaussSin { .. } => "gauss_sin",
            Design::BinaryCloglog => "binary_cloglog",
            Design::BinaryUnimodal => "binary_unimodal",
            Design::BinaryMonotonic => "binary_monotonic",
        }
    }

    /// `P(y = 1)` at index value `t` for the binary designs.
    pub fn binary_probability(&self, t: f64) -> Option<f64> {
        match self {
            Design::GaussSin { .. } => None,
            Design::BinaryCloglog => Some(-(-t.exp()).exp_m1()),
            Design::BinaryUnimodal => Some(logistic(-0.05 * (0.5 - 4.0 * t).powi(2) + 0.8)),
            Design::BinaryMonotonic => {
                let logit = (5.0 * t - 2.0).exp() / (1.0 + (5.0 * t - 3.0).exp()) - 1.5;
                Some(logistic(logit))
            }
        }
    }
}

/// One simulation setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSetting {
    pub design: Design,
    pub n: usize,
    pub d: usize,
    pub beta_true: Vec<f64>,
    /// Noise standard deviation (gaussian design only).
    pub sigma: f64,
    pub seed: u64,
}

/// Substream roles.
const ROLE_COVARIATES: u64 = 0;
const ROLE_RESPONSE: u64 = 1;

impl SimSetting {
    /// The sinusoidal design: `d = 10`, `β = (2, 1, 0, …, 0)/√5`, `σ = 0.2`.
    pub fn gauss_sin(a: f64, n: usize, seed: u64) -> Self {
        Self {
            design: Design::GaussSin { a },
            n,
            d: 10,
            beta_true: leading_two(10),
            sigma: 0.2,
            seed,
        }
    }

    /// A binary design: `d = 4`, `β = (2, 1, 0, 0)/√5`.
    pub fn binary(design: Design, n: usize, seed: u64) -> Result<Self> {
        if matches!(design, Design::GaussSin { .. }) {
            return Err(GsimError::Usage("not a binary design".into()));
        }
        Ok(Self {
            design,
            n,
            d: 4,
            beta_true: leading_two(4),
            sigma: 0.0,
            seed,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.beta_true.len() != self.d || self.d < 2 {
            return Err(GsimError::Usage(format!(
                "beta_true has {} entries for d = {}",
                self.beta_true.len(),
                self.d
            )));
        }
        let norm = self.beta_true.iter().map(|b| b * b).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(GsimError::Usage(format!("beta_true has norm {norm}, not 1")));
        }
        if self.n == 0 {
            return Err(GsimError::Usage("n must be positive".into()));
        }
        if let Design::GaussSin { a } = self.design {
            if !(a.is_finite() && self.sigma.is_finite() && self.sigma >= 0.0) {
                return Err(GsimError::Usage("a and σ must be finite, σ ≥ 0".into()));
            }
        }
        Ok(())
    }

    /// The fitting configuration matching the design: cubic regression
    /// splines for the sinusoidal design, truncated cubics for binary data.
    pub fn default_fit_config(&self) -> FitConfig {
        let basis_kind = match self.design {
            Design::GaussSin { .. } => BasisKind::CubicRegression,
            _ => BasisKind::TruncatedCubic,
        };
        FitConfig { basis_kind, ..FitConfig::default() }
    }

    /// Coordinates (0-based) whose true coefficient is zero.
    pub fn null_coordinates(&self) -> Vec<usize> {
        (0..self.d).filter(|&j| self.beta_true[j] == 0.0).collect()
    }

    fn stream(&self, replicate: u64, role: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(replicate.wrapping_mul(2).wrapping_add(role));
        rng
    }
}

fn leading_two(d: usize) -> Vec<f64> {
    let mut b = vec![0.0; d];
    b[0] = 2.0 / 5f64.sqrt();
    b[1] = 1.0 / 5f64.sqrt();
    b
}

/// Replicate `replicate` of the setting.
pub fn generate(setting: &SimSetting, replicate: u64) -> Result<Dataset> {
    setting.validate()?;
    let (n, d) = (setting.n, setting.d);
    let beta = DVector::from_column_slice(&setting.beta_true);
    let mut cov_rng = setting.stream(replicate, ROLE_COVARIATES);
    let mut resp_rng = setting.stream(replicate, ROLE_RESPONSE);
    // Row-major draws so that observation i uses the same numbers whatever n is.
    let mut x = DMatrix::zeros(n, d);
    match setting.design {
        Design::GaussSin { .. } => {
            let dist = Normal::new(2.0, 1.0).expect("valid normal");
            for i in 0..n {
                for j in 0..d {
                    x[(i, j)] = dist.sample(&mut cov_rng);
                }
            }
        }
        _ => {
            let dist = Uniform::new(-2.0, 2.0).expect("valid uniform");
            for i in 0..n {
                for j in 0..d {
                    x[(i, j)] = dist.sample(&mut cov_rng);
                }
            }
        }
    }
    let index = &x * &beta;
    let y = match setting.design {
        Design::GaussSin { a } => DVector::from_fn(n, |i, _| {
            let eps: f64 = StandardNormal.sample(&mut resp_rng);
            (a * index[i]).sin() + setting.sigma * eps
        }),
        design => DVector::from_fn(n, |i, _| {
            let p = design.binary_probability(index[i]).expect("binary design");
            if resp_rng.random::<f64>() < p {
                1.0
            } else {
                0.0
            }
        }),
    };
    Dataset::new(x, y, setting.design.family())
}

/// The sinusoidal design's first replicate.
pub fn gen_gaussian_sinusoidal(setting: &SimSetting) -> Result<Dataset> {
    if !matches!(setting.design, Design::GaussSin { .. }) {
        return Err(GsimError::Usage("setting is not the sinusoidal design".into()));
    }
    generate(setting, 0)
}

/// A binary design's first replicate.
pub fn gen_binary(setting: &SimSetting) -> Result<Dataset> {
    if matches!(setting.design, Design::GaussSin { .. }) {
        return Err(GsimError::Usage("setting is not a binary design".into()));
    }
    generate(setting, 0)
}

/// Parses `pi/2`, `3pi/4`, `0.5pi`, `pi` or a plain number.
pub fn parse_angle(text: &str) -> Result<f64> {
    let t: String = text.chars().filter(|c| !c.is_whitespace()).collect::<String>().to_lowercase();
    let bad = || GsimError::Usage(format!("cannot read `{text}` as an angle"));
    if let Ok(v) = t.parse::<f64>() {
        return Ok(v);
    }
    let (num, den) = match t.split_once('/') {
        Some((a, b)) => (a, Some(b)),
        None => (t.as_str(), None),
    };
    let numerator = if let Some(coef) = num.strip_suffix("pi") {
        let c = if coef.is_empty() { 1.0 } else { coef.trim_end_matches('*').parse::<f64>().map_err(|_| bad())? };
        c * PI
    } else {
        num.parse::<f64>().map_err(|_| bad())?
    };
    let value = match den {
        Some(d) => numerator / d.parse::<f64>().map_err(|_| bad())?,
        None => numerator,
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(bad())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn binary_link_values() {
        let p = Design::BinaryCloglog.binary_probability(0.0).unwrap();
        assert_relative_eq!(p, 1.0 - (-1.0f64).exp(), epsilon = 1e-15);
        assert_relative_eq!(p, 0.632121, epsilon = 1e-6);
        let p = Design::BinaryUnimodal.binary_probability(0.125).unwrap();
        assert_relative_eq!(p, 0.689974, epsilon = 1e-6);
        let p = Design::BinaryMonotonic.binary_probability(0.4).unwrap();
        assert_relative_eq!(p, 0.316708, epsilon = 1e-6);
    }

    #[test]
    fn angles() {
        assert_relative_eq!(parse_angle("pi/2").unwrap(), PI / 2.0);
        assert_relative_eq!(parse_angle("3pi/4").unwrap(), 0.75 * PI);
        assert_relative_eq!(parse_angle("PI").unwrap(), PI);
        assert_relative_eq!(parse_angle("1.25").unwrap(), 1.25);
        assert!(parse_angle("half").is_err());
    }

    #[test]
    fn noiseless_sinusoid_is_exact() {
        let mut s = SimSetting::gauss_sin(PI / 2.0, 50, 9);
        s.sigma = 0.0;
        let data = generate(&s, 3).unwrap();
        let beta = DVector::from_column_slice(&s.beta_true);
        let z = data.x() * beta;
        for i in 0..50 {
            assert_eq!(data.y()[i], (PI / 2.0 * z[i]).sin());
        }
    }

    #[test]
    fn replicates_are_order_independent_and_distinct() {
        let s = SimSetting::gauss_sin(PI / 2.0, 30, 77);
        let a = generate(&s, 5).unwrap();
        let _ = generate(&s, 4).unwrap();
        let b = generate(&s, 5).unwrap();
        assert_eq!(a.x(), b.x());
        assert_eq!(a.y(), b.y());
        let c = generate(&s, 6).unwrap();
        assert_ne!(a.x(), c.x());
    }

    #[test]
    fn covariate_mean_is_two() {
        let s = SimSetting::gauss_sin(PI / 2.0, 10_000, 1);
        let data = generate(&s, 0).unwrap();
        assert!((data.x().mean() - 2.0).abs() < 0.02);
    }

    #[test]
    fn binary_responses_are_zero_one() {
        let s = SimSetting::binary(Design::BinaryUnimodal, 200, 3).unwrap();
        let data = generate(&s, 0).unwrap();
        assert!(data.y().iter().all(|&v| v == 0.0 || v == 1.0));
        assert!(data.x().iter().all(|&v| (-2.0..2.0).contains(&v)));
    }
}
