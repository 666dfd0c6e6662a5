use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{
    clopper_pearson, join_set, CoefficientSummary, FailureRecord, RejectionCell, StudyReport,
    REPORT_SCHEMA_VERSION,
};
use super::{generate, SimSetting};
use crate::error::{GsimError, Result};
use crate::fitter::{fit_gsim, FitConfig, FittedGsim};
use crate::inference::{
    equivalent_se_given_null, fit_alternative, fit_null_from, plrt, plrt_f_adjusted,
    wald_covariance, wald_test, HypothesisConstraint,
};

/// Largest tolerated share of excluded replicates in any cell.
pub const MAX_FAILURE_RATE: f64 = 0.05;

/// A hypothesis test evaluated by the studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// PLRT against `φ̂χ²_r`.
    Plrt,
    /// PLRT against the F-adjusted reference.
    PlrtF,
    /// Plug-in Wald test against `χ²_r`.
    Wald,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Plrt, Method::PlrtF, Method::Wald];

    pub fn name(self) -> &'static str {
        match self {
            Method::Plrt => "plrt",
            Method::PlrtF => "plrt_f",
            Method::Wald => "wald",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = GsimError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "plrt" => Ok(Method::Plrt),
            "plrt_f" | "plrt-f" | "f" => Ok(Method::PlrtF),
            "wald" => Ok(Method::Wald),
            other => Err(GsimError::Usage(format!("unknown method `{other}`"))),
        }
    }
}

/// Everything a study needs.
#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub setting: SimSetting,
    pub n_reps: usize,
    /// Coefficient sets tested for zero, 0-based.
    pub drop_sets: Vec<Vec<usize>>,
    /// Nominal levels; a test rejects when `p < α`.
    pub levels: Vec<f64>,
    pub methods: Vec<Method>,
    /// Coefficients whose sampling sd, Wald SE and equivalent SE are summarized, 0-based.
    pub se_coefficients: Vec<usize>,
    pub fit_config: FitConfig,
    /// Worker threads; replicate results do not depend on this.
    pub workers: usize,
}

impl StudyConfig {
    /// Study with the design's default fitting configuration and one worker.
    pub fn new(setting: SimSetting, n_reps: usize) -> Self {
        let fit_config = setting.default_fit_config();
        Self {
            setting,
            n_reps,
            drop_sets: Vec::new(),
            levels: vec![0.01, 0.05, 0.10],
            methods: Method::ALL.to_vec(),
            se_coefficients: Vec::new(),
            fit_config,
            workers: 1,
        }
    }

    /// The sequential-tail convention: dropping `k` tests the last `k` coefficients.
    pub fn tail_drop(d: usize, count: usize) -> Vec<usize> {
        (d.saturating_sub(count)..d).collect()
    }

    fn validate(&self) -> Result<()> {
        self.setting.validate()?;
        self.fit_config.validate()?;
        let d = self.setting.d;
        for set in &self.drop_sets {
            if set.is_empty() || set.iter().any(|&j| j >= d) {
                return Err(GsimError::Usage(format!("invalid drop set {set:?} for d = {d}")));
            }
            if set.len() >= d {
                return Err(GsimError::Usage("a drop set must leave a covariate".into()));
            }
            if let Some(&j) = set.iter().find(|&&j| self.setting.beta_true[j] != 0.0) {
                return Err(GsimError::Usage(format!(
                    "coefficient {} is not zero under the simulated model",
                    j + 1
                )));
            }
        }
        if self.se_coefficients.iter().any(|&j| j >= d) {
            return Err(GsimError::Usage("SE coefficient out of range".into()));
        }
        if self.levels.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
            return Err(GsimError::Usage("levels must lie in (0, 1)".into()));
        }
        if self.workers == 0 {
            return Err(GsimError::Usage("at least one worker is required".into()));
        }
        Ok(())
    }
}

/// Type-1 error study over the given drop sets (0-based).
pub fn type1_error_study(
    setting: &SimSetting,
    n_reps: usize,
    drop_sets: &[Vec<usize>],
    levels: &[f64],
    methods: &[Method],
) -> Result<StudyReport> {
    let mut cfg = StudyConfig::new(setting.clone(), n_reps);
    cfg.drop_sets = drop_sets.to_vec();
    cfg.levels = levels.to_vec();
    cfg.methods = methods.to_vec();
    run_study(&cfg)
}

/// Standard-error study of `β̂₁` and `β̂₂`.
pub fn se_study(setting: &SimSetting, n_reps: usize) -> Result<StudyReport> {
    let mut cfg = StudyConfig::new(setting.clone(), n_reps);
    cfg.se_coefficients = vec![0, 1];
    run_study(&cfg)
}

/// Per-replicate outcome, folded in replicate order.
#[derive(Debug, Default)]
struct ReplicateRecord {
    /// `None` when the unrestricted fit failed.
    beta: Option<Vec<f64>>,
    /// Per drop set, per method: p-value if computed.
    p_values: Vec<BTreeMap<Method, f64>>,
    /// Per SE coefficient.
    wald_se: Vec<Option<f64>>,
    equivalent_se: Vec<Option<f64>>,
    failures: Vec<FailureRecord>,
}

/// Runs the study described by `cfg` on a dedicated worker pool.
pub fn run_study(cfg: &StudyConfig) -> Result<StudyReport> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| GsimError::Study(format!("cannot start workers: {e}")))?;
    let records: Vec<ReplicateRecord> = pool.install(|| {
        (0..cfg.n_reps as u64).into_par_iter().map(|rep| run_replicate(cfg, rep)).collect()
    });
    aggregate(cfg, &records)
}

fn failure(replicate: u64, stage: impl Into<String>, err: &GsimError) -> FailureRecord {
    FailureRecord { replicate, stage: stage.into(), message: err.to_string() }
}

fn run_replicate(cfg: &StudyConfig, rep: u64) -> ReplicateRecord {
    let n_sets = cfg.drop_sets.len();
    let n_se = cfg.se_coefficients.len();
    let mut record = ReplicateRecord {
        p_values: vec![BTreeMap::new(); n_sets],
        wald_se: vec![None; n_se],
        equivalent_se: vec![None; n_se],
        ..ReplicateRecord::default()
    };
    let data = match generate(&cfg.setting, rep) {
        Ok(d) => d,
        Err(e) => {
            record.failures.push(failure(rep, "generate", &e));
            return record;
        }
    };
    let d = cfg.setting.d;
    let fcfg = &cfg.fit_config;
    let unrestricted = match fit_gsim(&data, fcfg, &[]) {
        Ok(f) => f,
        Err(e) => {
            record.failures.push(failure(rep, "unrestricted", &e));
            return record;
        }
    };

    // Every distinct restricted model is fitted once, together with the
    // unrestricted model at its λ.
    let mut wanted: Vec<Vec<usize>> = cfg.drop_sets.clone();
    wanted.extend(cfg.se_coefficients.iter().map(|&j| vec![j]));
    let mut pairs: BTreeMap<Vec<usize>, std::result::Result<(FittedGsim, FittedGsim), String>> =
        BTreeMap::new();
    for set in wanted {
        let mut key = set.clone();
        key.sort_unstable();
        if pairs.contains_key(&key) {
            continue;
        }
        let fitted = HypothesisConstraint::drop(d, &key)
            .and_then(|m| fit_null_from(&data, fcfg, &m, &unrestricted))
            .and_then(|null| {
                let alt = fit_alternative(&data, fcfg, &null, &[&unrestricted])?;
                Ok((null, alt))
            });
        pairs.insert(key, fitted.map_err(|e| e.to_string()));
    }
    record.beta = Some(unrestricted.beta.iter().copied().collect());

    let wald = if cfg.methods.contains(&Method::Wald) || n_se > 0 {
        match wald_covariance(&data, &unrestricted) {
            Ok(c) => Some(c),
            Err(e) => {
                record.failures.push(failure(rep, "wald covariance", &e));
                None
            }
        }
    } else {
        None
    };

    for (s, set) in cfg.drop_sets.iter().enumerate() {
        let mut key = set.clone();
        key.sort_unstable();
        let label = format!("drop {}", join_set(&key.iter().map(|j| j + 1).collect::<Vec<_>>()));
        let pair = match &pairs[&key] {
            Ok(p) => Some(p),
            Err(msg) => {
                record.failures.push(FailureRecord {
                    replicate: rep,
                    stage: format!("{label}: fit"),
                    message: msg.clone(),
                });
                None
            }
        };
        let r = key.len();
        for &method in &cfg.methods {
            let outcome = match method {
                Method::Plrt => pair.map(|(null, alt)| plrt(null, alt, r)),
                Method::PlrtF => pair.map(|(null, alt)| plrt_f_adjusted(null, alt, r, data.n())),
                Method::Wald => wald.as_ref().map(|c| {
                    HypothesisConstraint::drop(d, &key).and_then(|m| wald_test(&unrestricted, c, &m))
                }),
            };
            match outcome {
                Some(Ok(t)) => {
                    record.p_values[s].insert(method, t.p_value);
                }
                Some(Err(e)) => record.failures.push(failure(rep, format!("{label}: {method}"), &e)),
                None => {}
            }
        }
    }

    for (k, &j) in cfg.se_coefficients.iter().enumerate() {
        record.wald_se[k] = wald.as_ref().map(|c| c.beta_se(d)[j]).filter(|v| v.is_finite());
        match &pairs[&vec![j]] {
            Ok((null, alt)) => {
                record.equivalent_se[k] = equivalent_se_given_null(alt, null, j).se
            }
            Err(msg) => record.failures.push(FailureRecord {
                replicate: rep,
                stage: format!("equivalent se {}", j + 1),
                message: msg.clone(),
            }),
        }
    }
    record
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

fn sample_sd(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return f64::NAN;
    }
    let m = values.iter().sum::<f64>() / values.len() as f64;
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

fn aggregate(cfg: &StudyConfig, records: &[ReplicateRecord]) -> Result<StudyReport> {
    let n_reps = records.len();
    let mut cells = Vec::new();
    for (s, set) in cfg.drop_sets.iter().enumerate() {
        let mut label: Vec<usize> = set.iter().map(|j| j + 1).collect();
        label.sort_unstable();
        for &method in &cfg.methods {
            let ps: Vec<f64> =
                records.iter().filter_map(|r| r.p_values.get(s)?.get(&method).copied()).collect();
            for &level in &cfg.levels {
                let rejections = ps.iter().filter(|&&p| p < level).count();
                let used = ps.len();
                let (ci_lower, ci_upper) = clopper_pearson(rejections, used, 0.05);
                cells.push(RejectionCell {
                    drop_set: label.clone(),
                    level,
                    method,
                    rejections,
                    used,
                    failed: n_reps - used,
                    rate: if used > 0 { rejections as f64 / used as f64 } else { 0.0 },
                    ci_lower,
                    ci_upper,
                });
            }
        }
    }

    let mut coefficients = Vec::new();
    for (k, &j) in cfg.se_coefficients.iter().enumerate() {
        let betas: Vec<f64> = records.iter().filter_map(|r| Some(r.beta.as_ref()?[j])).collect();
        let walds: Vec<f64> = records.iter().filter_map(|r| r.wald_se[k]).collect();
        let eqs: Vec<f64> = records.iter().filter_map(|r| r.equivalent_se[k]).collect();
        let finite_eqs: Vec<f64> = eqs.iter().copied().filter(|v| v.is_finite()).collect();
        coefficients.push(CoefficientSummary {
            coefficient: j + 1,
            true_value: cfg.setting.beta_true[j],
            used: betas.len(),
            mean_beta: mean(&betas).unwrap_or(f64::NAN),
            sd_beta: sample_sd(&betas),
            mean_wald_se: mean(&walds),
            wald_used: walds.len(),
            mean_equivalent_se: mean(&finite_eqs),
            equivalent_used: finite_eqs.len(),
            equivalent_infinite: eqs.len() - finite_eqs.len(),
        });
    }

    let failures: Vec<FailureRecord> =
        records.iter().flat_map(|r| r.failures.iter().cloned()).collect();
    let report = StudyReport {
        schema_version: REPORT_SCHEMA_VERSION.to_string(),
        setting: cfg.setting.clone(),
        n_reps,
        basis: cfg.fit_config.basis_kind,
        n_knots: cfg.fit_config.n_knots,
        rejection_rule: "reject when p < alpha".to_string(),
        cells,
        coefficients,
        failures,
    };

    if n_reps > 0 {
        let limit = MAX_FAILURE_RATE * n_reps as f64;
        if let Some(c) = report.cells.iter().find(|c| c.failed as f64 > limit) {
            return Err(GsimError::Study(format!(
                "{} of {} replicates failed for drop set {:?} ({}); first failure: {}",
                c.failed,
                n_reps,
                c.drop_set,
                c.method,
                first_failure(&report)
            )));
        }
        if let Some(c) = report.coefficients.iter().find(|c| (n_reps - c.used) as f64 > limit) {
            return Err(GsimError::Study(format!(
                "{} of {} unrestricted fits failed ({})",
                n_reps - c.used,
                n_reps,
                first_failure(&report)
            )));
        }
    }
    Ok(report)
}

fn first_failure(report: &StudyReport) -> String {
    report
        .failures
        .first()
        .map(|f| format!("replicate {} at {}: {}", f.replicate, f.stage, f.message))
        .unwrap_or_default()
}
