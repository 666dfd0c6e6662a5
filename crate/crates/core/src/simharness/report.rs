use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use super::study::Method;
use super::SimSetting;
use crate::error::Result;
use crate::splines::BasisKind;

/// Version of the JSON report layout (`docs/schemas/study_report.schema.json`).
pub const REPORT_SCHEMA_VERSION: &str = "1";

/// Rejection rate of one method at one level for one drop set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionCell {
    /// Dropped coefficients, 1-based.
    pub drop_set: Vec<usize>,
    pub level: f64,
    pub method: Method,
    pub rejections: usize,
    /// Replicates that produced a p-value for this cell.
    pub used: usize,
    /// Replicates excluded from this cell because a fit or test failed.
    pub failed: usize,
    pub rate: f64,
    /// Exact (Clopper–Pearson) 95% interval for the rate.
    pub ci_lower: f64,
    pub ci_upper: f64,
}

/// Sampling behaviour of one coefficient across replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSummary {
    /// 1-based coefficient index.
    pub coefficient: usize,
    pub true_value: f64,
    /// Replicates with a successful unrestricted fit.
    pub used: usize,
    pub mean_beta: f64,
    /// Sample standard deviation of `β̂_j` (the simulation "true" SE).
    pub sd_beta: f64,
    pub mean_wald_se: Option<f64>,
    pub wald_used: usize,
    pub mean_equivalent_se: Option<f64>,
    pub equivalent_used: usize,
    /// Replicates whose equivalent SE was infinite (`T_j ≤ 0`), excluded from the mean.
    pub equivalent_infinite: usize,
}

/// One excluded replicate-level computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub replicate: u64,
    pub stage: String,
    pub message: String,
}

/// Outcome of a Monte Carlo study. Contains no timing information so that a
/// fixed seed always yields the same bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub schema_version: String,
    pub setting: SimSetting,
    pub n_reps: usize,
    pub basis: BasisKind,
    pub n_knots: usize,
    /// How a p-value is turned into a rejection.
    pub rejection_rule: String,
    pub cells: Vec<RejectionCell>,
    pub coefficients: Vec<CoefficientSummary>,
    pub failures: Vec<FailureRecord>,
}

/// Fixed column order of [`StudyReport::write_cells_csv`].
pub const CELL_COLUMNS: [&str; 11] = [
    "design", "n", "drop_set", "level", "method", "rejections", "used", "failed", "rate",
    "ci_lower", "ci_upper",
];

/// Fixed column order of [`StudyReport::write_coefficients_csv`].
pub const COEFFICIENT_COLUMNS: [&str; 11] = [
    "design",
    "n",
    "coefficient",
    "true_value",
    "used",
    "mean_beta",
    "sd_beta",
    "mean_wald_se",
    "mean_equivalent_se",
    "equivalent_used",
    "equivalent_infinite",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl StudyReport {
    /// Looks up a cell; `drop_set` is 1-based.
    pub fn cell(&self, drop_set: &[usize], level: f64, method: Method) -> Option<&RejectionCell> {
        self.cells
            .iter()
            .find(|c| c.drop_set == drop_set && c.level == level && c.method == method)
    }

    /// Looks up a coefficient summary by 1-based index.
    pub fn coefficient(&self, coefficient: usize) -> Option<&CoefficientSummary> {
        self.coefficients.iter().find(|c| c.coefficient == coefficient)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per rejection cell; drop sets are written as `8;9;10`.
    pub fn write_cells_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(CELL_COLUMNS)?;
        for c in &self.cells {
            w.write_record([
                self.setting.design.name().to_string(),
                self.setting.n.to_string(),
                join_set(&c.drop_set),
                c.level.to_string(),
                c.method.name().to_string(),
                c.rejections.to_string(),
                c.used.to_string(),
                c.failed.to_string(),
                c.rate.to_string(),
                c.ci_lower.to_string(),
                c.ci_upper.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// One row per summarized coefficient; missing means are empty fields.
    pub fn write_coefficients_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(COEFFICIENT_COLUMNS)?;
        for c in &self.coefficients {
            w.write_record([
                self.setting.design.name().to_string(),
                self.setting.n.to_string(),
                c.coefficient.to_string(),
                c.true_value.to_string(),
                c.used.to_string(),
                c.mean_beta.to_string(),
                c.sd_beta.to_string(),
                opt(c.mean_wald_se),
                opt(c.mean_equivalent_se),
                c.equivalent_used.to_string(),
                c.equivalent_infinite.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn join_set(set: &[usize]) -> String {
    set.iter().map(|j| j.to_string()).collect::<Vec<_>>().join(";")
}

/// Exact two-sided `1 − alpha` interval for a binomial proportion.
pub fn clopper_pearson(successes: usize, trials: usize, alpha: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let (k, n) = (successes as f64, trials as f64);
    let lower = if successes == 0 {
        0.0
    } else {
        Beta::new(k, n - k + 1.0).expect("valid beta").inverse_cdf(alpha / 2.0)
    };
    let upper = if successes >= trials {
        1.0
    } else {
        Beta::new(k + 1.0, n - k).expect("valid beta").inverse_cdf(1.0 - alpha / 2.0)
    };
    (lower.clamp(0.0, 1.0), upper.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clopper_pearson_reference_values() {
        // Closed forms at the extremes: (α/2)^{1/n} and 1 − (α/2)^{1/n}.
        let (lo, hi) = clopper_pearson(0, 20, 0.05);
        assert_eq!(lo, 0.0);
        assert!((hi - (1.0 - 0.025f64.powf(1.0 / 20.0))).abs() < 1e-9);
        let (lo, hi) = clopper_pearson(20, 20, 0.05);
        assert!((lo - 0.025f64.powf(1.0 / 20.0)).abs() < 1e-9);
        assert_eq!(hi, 1.0);
        // 31 of 500: Beta(31, 470) 2.5% and Beta(32, 469) 97.5% quantiles.
        let (lo, hi) = clopper_pearson(31, 500, 0.05);
        assert!((lo - 0.0425111).abs() < 1e-6, "{lo}");
        assert!((hi - 0.0868526).abs() < 1e-6, "{hi}");
    }

    #[test]
    fn interval_contains_estimate() {
        for n in [1usize, 7, 50, 500] {
            for k in 0..=n.min(60) {
                let (lo, hi) = clopper_pearson(k, n, 0.05);
                let p = k as f64 / n as f64;
                assert!(lo <= p && p <= hi && lo >= 0.0 && hi <= 1.0);
            }
        }
    }
}
