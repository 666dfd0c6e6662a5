//! Penalized profile-likelihood estimation of a generalized single-index model.
//!
//! The index direction is written `β = β(φ)` on the unit sphere and the link
//! function as a penalized regression spline `g(z) = δᵀB(z)`. Fitting nests an
//! inner penalized IRLS for `δ` (given `β`) inside an outer quasi-Newton search
//! over `φ`. Knots and the smoothing parameter are refreshed at the current
//! index between outer cycles and frozen for the final solve.

mod bfgs;
mod gsim;
pub mod pirls;
pub mod sphere;

pub use gsim::{estimate_dispersion, fit_gsim, FittedGsim, LeadingOneForm};
pub use pirls::{
    index_values, penalized_loglik, penalized_loglik_gradient, profile_delta, select_lambda_gcv,
    LambdaChoice, PenalizedGradient, ProfiledDelta,
};
pub use sphere::{beta_from_phi, jacobian_beta_phi, SphereParam};

pub(crate) use gsim::{fit_embedded, polish_embedded};

use serde::{Deserialize, Serialize};

use crate::error::{GsimError, Result};
use crate::splines::BasisKind;

/// Tuning of the fitting algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Number of interior knots.
    pub n_knots: usize,
    pub basis_kind: BasisKind,
    /// Candidate smoothing parameters, strictly increasing.
    pub lambda_grid: Vec<f64>,
    /// Relative change in penalized log-likelihood that ends the inner IRLS.
    pub inner_tol: f64,
    /// Outer convergence threshold on `‖Δφ‖`.
    pub outer_tol: f64,
    pub max_inner: usize,
    /// Budget of outer quasi-Newton iterations per start.
    pub max_outer: usize,
    /// Random unit-sphere restarts in addition to the GLM start.
    pub n_restarts: usize,
    /// Maximum number of knot/λ refresh cycles per start.
    pub max_cycles: usize,
    /// Seed for the restart directions.
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            n_knots: 10,
            basis_kind: BasisKind::TruncatedCubic,
            lambda_grid: log_grid(1e-8, 1e4, 41),
            inner_tol: 1e-8,
            outer_tol: 1e-7,
            max_inner: 100,
            max_outer: 200,
            n_restarts: 5,
            max_cycles: 30,
            seed: 0x005E_ED0F_1D3C,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_knots == 0 {
            return Err(GsimError::Usage("n_knots must be positive".into()));
        }
        if self.lambda_grid.is_empty()
            || self.lambda_grid.iter().any(|l| !(l.is_finite() && *l >= 0.0))
            || self.lambda_grid.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(GsimError::Usage(
                "λ grid must be non-empty, non-negative and strictly increasing".into(),
            ));
        }
        if !(self.inner_tol > 0.0 && self.outer_tol > 0.0) {
            return Err(GsimError::Usage("tolerances must be positive".into()));
        }
        if self.max_inner == 0 || self.max_outer == 0 || self.max_cycles == 0 {
            return Err(GsimError::Usage("iteration limits must be positive".into()));
        }
        Ok(())
    }

    /// Same configuration with a single fixed smoothing parameter.
    pub fn with_fixed_lambda(mut self, lambda: f64) -> Self {
        self.lambda_grid = vec![lambda];
        self
    }
}

/// `count` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|k| (a + (b - a) * k as f64 / (count - 1) as f64).exp())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid() {
        let c = FitConfig::default();
        assert_eq!(c.lambda_grid.len(), 41);
        assert!((c.lambda_grid[0] - 1e-8).abs() < 1e-20);
        assert!((c.lambda_grid[40] - 1e4).abs() < 1e-8);
        assert!((c.lambda_grid[20] - 1e-2).abs() < 1e-12);
        c.validate().unwrap();
        assert!(FitConfig { lambda_grid: vec![1.0, 0.5], ..FitConfig::default() }.validate().is_err());
        assert!(FitConfig { outer_tol: 0.0, ..FitConfig::default() }.validate().is_err());
    }
}
