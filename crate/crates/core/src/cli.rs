//! Command-line front end: `fit`, `test`, `se` and `simulate`.
//!
//! Exit codes: 0 success, 1 data errors, 2 fit or test failures, 3 usage
//! errors. Reports go to `--out` (or standard output) as JSON or CSV.
//!
//! JSON layouts ([`FitReport`] for `fit` and `se`, [`TestReport`] for `test`,
//! [`StudyReport`] for `simulate`) are versioned by their `schema_version`
//! field and described by `docs/schemas/{fit,test,study}_report.schema.json`.
//! Non-finite numbers are written as `null`.
//!
//! CSV layouts have a header row and a fixed column order:
//! * `fit`, `se`: [`FIT_COLUMNS`], one row per coefficient;
//! * `test`: [`TEST_COLUMNS`], one row per method (`plrt`, `plrt_f`, `wald`);
//! * `simulate`: [`crate::simharness::CELL_COLUMNS`], one row per
//!   (drop set, level, method) cell, and [`crate::simharness::COEFFICIENT_COLUMNS`]
//!   in the sibling `<stem>.coefficients.csv` (after a blank line on
//!   standard output). Drop sets are written 1-based and `;`-separated.
//!
//! Elapsed time goes to standard error only, so reports are reproducible
//! byte for byte.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{GsimError, Result};
use crate::expfam::Family;
use crate::fitter::{fit_gsim, log_grid, FitConfig, FittedGsim};
use crate::inference::{
    equivalent_se, fit_nested, plrt, plrt_f_adjusted, wald_covariance, wald_test,
    HypothesisConstraint, TestResult,
};
use crate::simharness::{
    parse_angle, run_study, Design, Method, SimSetting, StudyConfig, StudyReport,
};
use crate::splines::BasisKind;

/// Version shared by the `fit`, `test` and `se` report layouts.
pub const CLI_SCHEMA_VERSION: &str = "1";

/// Environment variable capping the number of simulation workers.
pub const THREADS_ENV: &str = "GSIM_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "gsim",
    version,
    about = "Generalized single-index models with profile likelihood ratio inference"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit the model; report coefficients with Wald and equivalent SEs.
    Fit(FitArgs),
    /// Test that the `--drop` coefficients are zero (PLRT, F-adjusted PLRT, Wald).
    Test(TestArgs),
    /// Equivalent standard errors of every coefficient.
    Se(DataArgs),
    /// Monte Carlo study of rejection rates and standard errors.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BasisArg {
    Truncated,
    Cr,
}

impl From<BasisArg> for BasisKind {
    fn from(b: BasisArg) -> Self {
        match b {
            BasisArg::Truncated => BasisKind::TruncatedCubic,
            BasisArg::Cr => BasisKind::CubicRegression,
        }
    }
}

/// Smoothing and optimizer flags shared by every subcommand.
#[derive(Debug, Clone, Args)]
struct ModelArgs {
    /// Number of interior knots.
    #[arg(long, default_value_t = 10)]
    knots: usize,
    /// Spline basis (default: truncated for data subcommands, per design for `simulate`).
    #[arg(long, value_enum)]
    basis: Option<BasisArg>,
    /// Smallest smoothing parameter on the search grid.
    #[arg(long, default_value_t = 1e-8)]
    lambda_min: f64,
    /// Largest smoothing parameter on the search grid.
    #[arg(long, default_value_t = 1e4)]
    lambda_max: f64,
    /// Number of log-spaced grid points.
    #[arg(long, default_value_t = 41)]
    lambda_count: usize,
    /// Random restarts of the index search.
    #[arg(long, default_value_t = 5)]
    restarts: usize,
}

impl ModelArgs {
    fn fit_config(&self, base: FitConfig, seed: Option<u64>) -> Result<FitConfig> {
        if self.lambda_count == 0 || !(self.lambda_min > 0.0 && self.lambda_max >= self.lambda_min) {
            return Err(GsimError::Usage(
                "need 0 < --lambda-min ≤ --lambda-max and --lambda-count ≥ 1".into(),
            ));
        }
        let count = if self.lambda_min == self.lambda_max { 1 } else { self.lambda_count };
        let mut cfg = FitConfig {
            n_knots: self.knots,
            lambda_grid: log_grid(self.lambda_min, self.lambda_max, count),
            n_restarts: self.restarts,
            ..base
        };
        if let Some(b) = self.basis {
            cfg.basis_kind = b.into();
        }
        if let Some(s) = seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args)]
struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    family: Family,
    /// Response column.
    #[arg(long)]
    response: String,
    /// Covariate columns (default: every other column).
    #[arg(long, value_delimiter = ',')]
    covariates: Option<Vec<String>>,
    /// Seed of the random restarts.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Output file (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Debug, Clone, Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Also write (index value, fitted mean) pairs as CSV to this path.
    #[arg(long)]
    emit_curve: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
struct TestArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Covariates whose coefficients are zero under the null.
    #[arg(long, value_delimiter = ',')]
    drop: Vec<String>,
}

#[derive(Debug, Clone, Args)]
struct SimulateArgs {
    /// gauss_sin, binary_cloglog, binary_unimodal or binary_monotonic.
    #[arg(long)]
    design: String,
    /// Periodicity of gauss_sin, e.g. `pi/2` or `3pi/4`.
    #[arg(long, default_value = "pi/2")]
    a: String,
    /// Sample size (default 100 for gauss_sin, 350 for binary designs).
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 500)]
    reps: usize,
    /// Tail drop sets by size, e.g. `1,7` tests β_d = 0 and β_{d−6} = … = β_d = 0.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    drop_count: Vec<usize>,
    /// Nominal levels.
    #[arg(long, value_delimiter = ',', default_value = "0.01,0.05,0.10")]
    alpha: Vec<f64>,
    /// Methods: plrt, plrt_f, wald.
    #[arg(long, value_delimiter = ',', default_value = "plrt,plrt_f,wald")]
    methods: Vec<String>,
    /// 1-based coefficients to summarize (sd, mean Wald SE, mean equivalent SE).
    #[arg(long, value_delimiter = ',')]
    se_coefficients: Vec<usize>,
    /// Master seed of the study.
    #[arg(long, default_value_t = 20240611)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Output file (default: standard output). With `--format csv` the
    /// coefficient table goes to a sibling `<stem>.coefficients.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
}

/// One coefficient of a `fit` report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub name: String,
    pub beta: f64,
    pub wald_se: Option<f64>,
    /// `None` when unavailable; JSON cannot hold `+∞`, see `equivalent_se_infinite`.
    pub equivalent_se: Option<f64>,
    pub equivalent_se_infinite: bool,
    /// `T_j = 2(ℓ̂ − ℓ̂_{β_j = 0})`.
    pub equivalent_statistic: Option<f64>,
    pub lambda_null: Option<f64>,
}

/// Summary of one fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub family: Family,
    pub n: usize,
    pub covariates: Vec<String>,
    pub basis: BasisKind,
    pub n_knots: usize,
    pub lambda: f64,
    pub edf: f64,
    pub edf_smooth: f64,
    pub dispersion: f64,
    pub loglik: f64,
    pub penalized_loglik: f64,
    pub smoothing_score: f64,
    pub converged: bool,
    pub boundary_warning: bool,
    pub separation_flag: bool,
    pub warnings: Vec<String>,
}

impl ModelSummary {
    fn new(data: &Dataset, cfg: &FitConfig, fit: &FittedGsim) -> Self {
        Self {
            family: data.family(),
            n: data.n(),
            covariates: data.names().to_vec(),
            basis: cfg.basis_kind,
            n_knots: cfg.n_knots,
            lambda: fit.lambda,
            edf: fit.edf,
            edf_smooth: fit.edf_smooth,
            dispersion: fit.dispersion,
            loglik: fit.loglik,
            penalized_loglik: fit.penalized_loglik,
            smoothing_score: fit.smoothing_score,
            converged: fit.converged,
            boundary_warning: fit.boundary_warning,
            separation_flag: fit.separation_flag,
            warnings: fit.warnings.clone(),
        }
    }
}

/// Output of `fit` and `se`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub schema_version: String,
    pub model: ModelSummary,
    pub coefficients: Vec<CoefficientRow>,
}

/// Output of `test`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub schema_version: String,
    pub drop: Vec<String>,
    pub unrestricted: ModelSummary,
    /// λ selected under the null; the alternative of the PLRT is fitted at it.
    pub lambda_null: f64,
    pub plrt: TestResult,
    pub plrt_f: TestResult,
    pub wald: Option<TestResult>,
    pub warnings: Vec<String>,
}

/// Fixed column order of the `fit` and `se` CSV reports.
pub const FIT_COLUMNS: [&str; 7] = [
    "name",
    "beta",
    "wald_se",
    "equivalent_se",
    "equivalent_statistic",
    "lambda_null",
    "lambda",
];

/// Fixed column order of the `test` CSV report.
pub const TEST_COLUMNS: [&str; 8] = [
    "method",
    "drop",
    "statistic",
    "r",
    "denom_df",
    "p_value",
    "dispersion_used",
    "lambda_null",
];

/// Runs the command line `argv` (program name first) and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let started = Instant::now();
    let outcome = match cli.command {
        Command::Fit(a) => cmd_fit(&a),
        Command::Test(a) => cmd_test(&a),
        Command::Se(a) => cmd_se(&a),
        Command::Simulate(a) => cmd_simulate(&a),
    };
    eprintln!("elapsed {:.2} s", started.elapsed().as_secs_f64());
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Maps an error to the documented exit code.
pub fn exit_code(e: &GsimError) -> i32 {
    match e {
        GsimError::Data(_) | GsimError::Io(_) | GsimError::Csv(_) | GsimError::Json(_) => 1,
        GsimError::Usage(_) | GsimError::Constraint(_) => 3,
        GsimError::Domain(_)
        | GsimError::Convergence { .. }
        | GsimError::Fit(_)
        | GsimError::Singular(_)
        | GsimError::DegenerateDf(_)
        | GsimError::Test(_)
        | GsimError::Study(_) => 2,
    }
}

fn load(args: &DataArgs) -> Result<(Dataset, FitConfig)> {
    let data = Dataset::from_csv_path(
        &args.input,
        &args.response,
        args.covariates.as_deref(),
        args.family,
    )?;
    let cfg = args.model.fit_config(FitConfig::default(), args.seed)?;
    Ok((data, cfg))
}

fn sink(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let mut w = sink(out)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn coefficient_rows(data: &Dataset, cfg: &FitConfig, fit: &FittedGsim) -> Result<Vec<CoefficientRow>> {
    let wald = wald_covariance(data, fit).ok().map(|c| c.beta_se(data.d()));
    let mut rows = Vec::with_capacity(data.d());
    for j in 0..data.d() {
        let eq = equivalent_se(data, cfg, fit, j)?;
        let infinite = eq.se.is_some_and(|s| s.is_infinite());
        rows.push(CoefficientRow {
            name: data.names()[j].clone(),
            beta: fit.beta[j],
            wald_se: wald.as_ref().map(|s| s[j]).filter(|v| v.is_finite()),
            equivalent_se: eq.se.filter(|s| s.is_finite()),
            equivalent_se_infinite: infinite,
            equivalent_statistic: Some(eq.statistic),
            lambda_null: Some(eq.lambda_null),
        });
    }
    Ok(rows)
}

fn write_fit_report(report: &FitReport, format: Format, out: Option<&Path>) -> Result<()> {
    match format {
        Format::Json => write_json(report, out),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(sink(out)?);
            w.write_record(FIT_COLUMNS)?;
            for c in &report.coefficients {
                let se = if c.equivalent_se_infinite { "inf".to_string() } else { opt(c.equivalent_se) };
                w.write_record([
                    c.name.clone(),
                    c.beta.to_string(),
                    opt(c.wald_se),
                    se,
                    opt(c.equivalent_statistic),
                    opt(c.lambda_null),
                    report.model.lambda.to_string(),
                ])?;
            }
            w.flush()?;
            Ok(())
        }
    }
}

fn cmd_fit(args: &FitArgs) -> Result<()> {
    let (data, cfg) = load(&args.data)?;
    let fit = fit_gsim(&data, &cfg, &[])?;
    let report = FitReport {
        schema_version: CLI_SCHEMA_VERSION.into(),
        model: ModelSummary::new(&data, &cfg, &fit),
        coefficients: coefficient_rows(&data, &cfg, &fit)?,
    };
    write_fit_report(&report, args.data.format, args.data.out.as_deref())?;
    if let Some(path) = &args.emit_curve {
        write_curve(&data, &fit, path)?;
    }
    Ok(())
}

/// `(index, fitted_mean)` pairs sorted by index.
fn write_curve(data: &Dataset, fit: &FittedGsim, path: &Path) -> Result<()> {
    let z = fit.index(data);
    let mu = fit.fitted_means(data)?;
    let mut pairs: Vec<(f64, f64)> = z.iter().copied().zip(mu.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["index", "fitted_mean"])?;
    for (zi, mi) in pairs {
        w.write_record([zi.to_string(), mi.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_se(args: &DataArgs) -> Result<()> {
    let (data, cfg) = load(args)?;
    let fit = fit_gsim(&data, &cfg, &[])?;
    let report = FitReport {
        schema_version: CLI_SCHEMA_VERSION.into(),
        model: ModelSummary::new(&data, &cfg, &fit),
        coefficients: coefficient_rows(&data, &cfg, &fit)?,
    };
    write_fit_report(&report, args.format, args.out.as_deref())
}

fn drop_indices(data: &Dataset, names: &[String]) -> Result<Vec<usize>> {
    let mut idx = Vec::with_capacity(names.len());
    for name in names {
        let j = data.column_index(name).ok_or_else(|| {
            GsimError::Usage(format!("--drop: `{name}` is not one of the covariates"))
        })?;
        if idx.contains(&j) {
            return Err(GsimError::Usage(format!("--drop: `{name}` listed twice")));
        }
        idx.push(j);
    }
    if idx.len() >= data.d() {
        return Err(GsimError::Usage("--drop must leave at least one covariate".into()));
    }
    idx.sort_unstable();
    Ok(idx)
}

fn cmd_test(args: &TestArgs) -> Result<()> {
    let (data, cfg) = load(&args.data)?;
    let drop = drop_indices(&data, &args.drop)?;
    let r = drop.len();
    let constraint = HypothesisConstraint::drop(data.d(), &drop)?;
    let (unrestricted, null, alt) = if r == 0 {
        let u = fit_gsim(&data, &cfg, &[])?;
        (u.clone(), u.clone(), u)
    } else {
        let f = fit_nested(&data, &cfg, &constraint)?;
        (f.unrestricted, f.null, f.alt)
    };
    let plrt_result = plrt(&null, &alt, r)?;
    let f_result = plrt_f_adjusted(&null, &alt, r, data.n())?;
    let mut warnings = Vec::new();
    let wald = match wald_covariance(&data, &unrestricted)
        .and_then(|c| wald_test(&unrestricted, &c, &constraint))
    {
        Ok(t) => Some(t),
        Err(e) => {
            warnings.push(format!("Wald test unavailable: {e}"));
            None
        }
    };
    let report = TestReport {
        schema_version: CLI_SCHEMA_VERSION.into(),
        drop: drop.iter().map(|&j| data.names()[j].clone()).collect(),
        unrestricted: ModelSummary::new(&data, &cfg, &unrestricted),
        lambda_null: null.lambda,
        plrt: plrt_result,
        plrt_f: f_result,
        wald,
        warnings,
    };
    match args.data.format {
        Format::Json => write_json(&report, args.data.out.as_deref()),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(sink(args.data.out.as_deref())?);
            w.write_record(TEST_COLUMNS)?;
            let label = report.drop.join(";");
            let rows = [("plrt", Some(&report.plrt)), ("plrt_f", Some(&report.plrt_f)), ("wald", report.wald.as_ref())];
            for (name, t) in rows {
                let Some(t) = t else { continue };
                w.write_record([
                    name.to_string(),
                    label.clone(),
                    t.statistic.to_string(),
                    t.r.to_string(),
                    opt(t.denom_df),
                    t.p_value.to_string(),
                    t.dispersion_used.to_string(),
                    opt(t.lambda_null),
                ])?;
            }
            w.flush()?;
            Ok(())
        }
    }
}

/// Worker count: `GSIM_THREADS` if set, else the available parallelism.
pub fn worker_count() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(GsimError::Usage(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)),
    }
}

fn parse_design(name: &str, a: &str) -> Result<Design> {
    Ok(match name {
        "gauss_sin" => Design::GaussSin { a: parse_angle(a)? },
        "binary_cloglog" => Design::BinaryCloglog,
        "binary_unimodal" => Design::BinaryUnimodal,
        "binary_monotonic" => Design::BinaryMonotonic,
        other => return Err(GsimError::Usage(format!("unknown design `{other}`"))),
    })
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let design = parse_design(&args.design, &args.a)?;
    let setting = match design {
        Design::GaussSin { a } => SimSetting::gauss_sin(a, args.n.unwrap_or(100), args.seed),
        other => SimSetting::binary(other, args.n.unwrap_or(350), args.seed)?,
    };
    setting.validate()?;
    let d = setting.d;
    let mut cfg = StudyConfig::new(setting, args.reps);
    cfg.fit_config = args.model.fit_config(cfg.fit_config.clone(), None)?;
    cfg.drop_sets = args
        .drop_count
        .iter()
        .map(|&c| {
            if c == 0 || c >= d {
                Err(GsimError::Usage(format!("--drop-count {c} must be in 1..{d}")))
            } else {
                Ok(StudyConfig::tail_drop(d, c))
            }
        })
        .collect::<Result<_>>()?;
    cfg.levels = args.alpha.clone();
    cfg.methods = args.methods.iter().map(|m| m.parse()).collect::<Result<Vec<Method>>>()?;
    cfg.se_coefficients = args
        .se_coefficients
        .iter()
        .map(|&j| {
            if j == 0 || j > d {
                Err(GsimError::Usage(format!("--se-coefficients {j} must be in 1..={d}")))
            } else {
                Ok(j - 1)
            }
        })
        .collect::<Result<_>>()?;
    cfg.workers = worker_count()?;
    let report = run_study(&cfg)?;
    write_study(&report, args.format, args.out.as_deref())
}

fn write_study(report: &StudyReport, format: Format, out: Option<&Path>) -> Result<()> {
    match format {
        Format::Json => {
            let mut w = sink(out)?;
            w.write_all(report.to_json()?.as_bytes())?;
            writeln!(w)?;
            w.flush()?;
            Ok(())
        }
        Format::Csv => {
            report.write_cells_csv(sink(out)?)?;
            if !report.coefficients.is_empty() {
                match out {
                    Some(p) => report.write_coefficients_csv(File::create(coefficients_path(p))?)?,
                    None => {
                        println!();
                        report.write_coefficients_csv(io::stdout())?;
                    }
                }
            }
            Ok(())
        }
    }
}

/// `report.csv` → `report.coefficients.csv`.
pub fn coefficients_path(cells: &Path) -> PathBuf {
    let stem = cells.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    cells.with_file_name(format!("{stem}.coefficients.csv"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_3() {
        assert_eq!(run(["gsim", "frobnicate"]), 3);
        assert_eq!(run(["gsim", "fit", "--family", "gaussian"]), 3);
        assert_eq!(run(["gsim", "simulate", "--design", "nope", "--reps", "1"]), 3);
        assert_eq!(run(["gsim", "simulate", "--design", "binary_cloglog", "--drop-count", "4", "--reps", "1"]), 3);
    }

    #[test]
    fn help_exits_0() {
        assert_eq!(run(["gsim", "--help"]), 0);
    }

    #[test]
    fn missing_input_is_a_data_error() {
        let code = run([
            "gsim", "fit", "--input", "/nonexistent/file.csv", "--family", "gaussian", "--response", "y",
        ]);
        assert_eq!(code, 1);
    }

    #[test]
    fn sibling_coefficient_path() {
        assert_eq!(
            coefficients_path(Path::new("/tmp/out/report.csv")),
            PathBuf::from("/tmp/out/report.coefficients.csv")
        );
    }

    #[test]
    fn error_codes() {
        assert_eq!(exit_code(&GsimError::Data("x".into())), 1);
        assert_eq!(exit_code(&GsimError::Fit("x".into())), 2);
        assert_eq!(exit_code(&GsimError::Usage("x".into())), 3);
    }
}
