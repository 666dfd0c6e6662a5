//! Inference on the index coefficients: profile likelihood ratio tests (χ² and
//! F-referenced), equivalent standard errors obtained by inverting the PLRT,
//! and plug-in Wald covariance and tests built on the Fisher information.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor};

use crate::data::Dataset;
use crate::error::{GsimError, Result};
use crate::fitter::{fit_embedded, polish_embedded, FitConfig, FittedGsim};

/// Nested PLRT statistics above this negative value are clamped to zero.
pub const NEGATIVE_STATISTIC_TOLERANCE: f64 = 1e-8;

/// Linear hypothesis `H₀: Mβ = 0` with orthonormal rows (`MMᵀ = I_r`, `r < d`).
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisConstraint {
    m: DMatrix<f64>,
}

impl HypothesisConstraint {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        let (r, d) = m.shape();
        if r >= d {
            return Err(GsimError::Constraint(format!(
                "rank r = {r} must be below the dimension d = {d}"
            )));
        }
        let gram = &m * m.transpose();
        let gap = (gram - DMatrix::identity(r, r)).amax();
        if !(gap <= 1e-10) {
            return Err(GsimError::Constraint(format!(
                "rows of M are not orthonormal (max |MMᵀ − I| = {gap:.3e})"
            )));
        }
        Ok(Self { m })
    }

    /// Coordinate selector for `β_j = 0, j ∈ indices` (0-based).
    pub fn drop(d: usize, indices: &[usize]) -> Result<Self> {
        let mut sorted = indices.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != indices.len() || sorted.iter().any(|&j| j >= d) {
            return Err(GsimError::Constraint(format!(
                "{indices:?} is not a set of coordinates below {d}"
            )));
        }
        let mut m = DMatrix::zeros(sorted.len(), d);
        for (row, &j) in sorted.iter().enumerate() {
            m[(row, j)] = 1.0;
        }
        Self::new(m)
    }

    /// The sequential-tail convention: the last `count` coordinates.
    pub fn drop_last(d: usize, count: usize) -> Result<Self> {
        let indices: Vec<usize> = (d.saturating_sub(count)..d).collect();
        Self::drop(d, &indices)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn rank(&self) -> usize {
        self.m.nrows()
    }

    pub fn dim(&self) -> usize {
        self.m.ncols()
    }

    /// The constrained coordinates when every row is a unit coordinate vector.
    pub fn selected_coordinates(&self) -> Option<Vec<usize>> {
        let mut out = Vec::with_capacity(self.rank());
        for row in self.m.row_iter() {
            let ones: Vec<usize> = (0..row.len()).filter(|&j| row[j] != 0.0).collect();
            if ones.len() != 1 || row[ones[0]] != 1.0 {
                return None;
            }
            out.push(ones[0]);
        }
        out.sort_unstable();
        Some(out)
    }

    /// Orthonormal basis `N` (`d × (d−r)`) of the null space of `M`.
    pub fn null_space_basis(&self) -> DMatrix<f64> {
        let d = self.dim();
        if let Some(sel) = self.selected_coordinates() {
            let kept: Vec<usize> = (0..d).filter(|j| !sel.contains(j)).collect();
            let mut n = DMatrix::zeros(d, kept.len());
            for (c, &j) in kept.iter().enumerate() {
                n[(j, c)] = 1.0;
            }
            return n;
        }
        let projector = DMatrix::identity(d, d) - self.m.transpose() * &self.m;
        let eig = projector.symmetric_eigen();
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let k = d - self.rank();
        let mut n = DMatrix::zeros(d, k);
        for (c, &idx) in order.iter().take(k).enumerate() {
            n.set_column(c, &eig.eigenvectors.column(idx));
        }
        n
    }

    /// `Mβ`.
    pub fn apply(&self, beta: &DVector<f64>) -> DVector<f64> {
        &self.m * beta
    }
}

/// Reference distribution behind a p-value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    /// `T/φ̂ ~ χ²_r`.
    ChiSquaredScaled,
    /// `T/(rφ̂) ~ F_{r, n − edf(H₁)}`.
    FScaled,
    /// `W ~ χ²_r`.
    WaldChiSquared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub r: usize,
    pub denom_df: Option<f64>,
    pub reference: Reference,
    pub p_value: f64,
    pub dispersion_used: f64,
    pub lambda_null: Option<f64>,
    pub lambda_alt: Option<f64>,
    pub warnings: Vec<String>,
}

/// Fits the model under `H₀: Mβ = 0`.
///
/// Coordinate selectors drop covariates; other constraints are fitted on the
/// covariates `XN` with `N` an orthonormal basis of the null space of `M`.
pub fn fit_null(
    dataset: &Dataset,
    config: &FitConfig,
    constraint: &HypothesisConstraint,
) -> Result<FittedGsim> {
    fit_null_with_starts(dataset, config, constraint, &[])
}

/// As [`fit_null`], additionally starting from the projection of the
/// alternative fit's `β̂` onto the null hypothesis.
pub fn fit_null_from(
    dataset: &Dataset,
    config: &FitConfig,
    constraint: &HypothesisConstraint,
    alt: &FittedGsim,
) -> Result<FittedGsim> {
    fit_null_with_starts(dataset, config, constraint, std::slice::from_ref(&alt.beta))
}

fn fit_null_with_starts(
    dataset: &Dataset,
    config: &FitConfig,
    constraint: &HypothesisConstraint,
    starts: &[DVector<f64>],
) -> Result<FittedGsim> {
    if constraint.dim() != dataset.d() {
        return Err(GsimError::Constraint(format!(
            "M has {} columns but the data have {} covariates",
            constraint.dim(),
            dataset.d()
        )));
    }
    let drop_set = constraint.selected_coordinates().unwrap_or_default();
    fit_embedded(dataset, config, constraint.null_space_basis(), drop_set, starts)
}

/// Re-fits `alt` from every null optimum that it does not dominate (see
/// [`FittedGsim::preferred_over`]). A null optimum lies inside the
/// alternative's parameter space, so such a null shows that the alternative's
/// search missed a better region; the local phase started there yields a
/// competing fit, and the preferred one is kept.
pub fn refine_alternative(
    dataset: &Dataset,
    config: &FitConfig,
    alt: FittedGsim,
    nulls: &[&FittedGsim],
) -> Result<FittedGsim> {
    let mut best = alt;
    for seed in nulls {
        if !seed.preferred_over(&best) {
            continue;
        }
        let refit = polish_embedded(
            dataset,
            config,
            best.embedding().clone(),
            best.drop_set.clone(),
            &seed.beta,
        )?;
        if refit.preferred_over(&best) {
            best = refit;
        }
    }
    Ok(best)
}

/// Fits the unrestricted model at the smoothing parameter selected under the
/// null, so that both sides of the likelihood ratio share one λ. Starts
/// include the null optimum and the index of every fit in `seeds`; the
/// result's profile log-likelihood is never below the null's.
pub fn fit_alternative(
    dataset: &Dataset,
    config: &FitConfig,
    null: &FittedGsim,
    seeds: &[&FittedGsim],
) -> Result<FittedGsim> {
    if !null.same_data(dataset) {
        return Err(GsimError::Usage("null fit was computed on different data".into()));
    }
    let at_null = config.clone().with_fixed_lambda(null.lambda);
    let d = dataset.d();
    let mut starts: Vec<DVector<f64>> = seeds.iter().map(|f| f.beta.clone()).collect();
    starts.push(null.beta.clone());
    let alt = fit_embedded(dataset, &at_null, DMatrix::identity(d, d), Vec::new(), &starts)?;
    refine_alternative(dataset, &at_null, alt, &[null])
}

/// The fits behind one likelihood-ratio test.
#[derive(Debug, Clone)]
pub struct NestedFits {
    /// Unrestricted fit with its own automatically selected λ.
    pub unrestricted: FittedGsim,
    /// Fit under `H₀`, automatically selected λ.
    pub null: FittedGsim,
    /// Unrestricted fit at the null's λ; the alternative of the test.
    pub alt: FittedGsim,
}

/// Fits the unrestricted model, the null (also started from the unrestricted
/// optimum) and the alternative at the null's λ.
pub fn fit_nested(
    dataset: &Dataset,
    config: &FitConfig,
    constraint: &HypothesisConstraint,
) -> Result<NestedFits> {
    let unrestricted = crate::fitter::fit_gsim(dataset, config, &[])?;
    let null = fit_null_from(dataset, config, constraint, &unrestricted)?;
    let alt = fit_alternative(dataset, config, &null, &[&unrestricted])?;
    Ok(NestedFits { unrestricted, null, alt })
}

fn check_nested(null: &FittedGsim, alt: &FittedGsim, r: usize) -> Result<()> {
    if null.fingerprint != alt.fingerprint || null.family != alt.family || null.n != alt.n {
        return Err(GsimError::Usage("fits were computed on different data".into()));
    }
    let e_alt = alt.embedding();
    let e_null = null.embedding();
    if e_alt.nrows() != e_null.nrows() {
        return Err(GsimError::Usage("fits have different covariate dimensions".into()));
    }
    let residual = e_null - e_alt * e_alt.tr_mul(e_null);
    if residual.amax() > 1e-8 {
        return Err(GsimError::Usage(
            "the null model is not nested in the alternative".into(),
        ));
    }
    if alt.free_dim() - e_null.ncols() != r {
        return Err(GsimError::Usage(format!(
            "r = {r} does not match the {} constraints separating the fits",
            alt.free_dim() - e_null.ncols()
        )));
    }
    Ok(())
}

/// `T = 2(ℓ̂_alt − ℓ̂_null)` with the negative-tolerance rule applied.
fn likelihood_ratio(null: &FittedGsim, alt: &FittedGsim) -> Result<(f64, Vec<String>)> {
    let (t, mut warnings) = raw_likelihood_ratio(null, alt)?;
    if null.lambda != alt.lambda {
        warnings.push(format!(
            "fits use different smoothing parameters (null {:.3e}, alternative {:.3e}); fit the alternative at the null's λ for a calibrated test",
            null.lambda, alt.lambda
        ));
    }
    Ok((t, warnings))
}

fn raw_likelihood_ratio(null: &FittedGsim, alt: &FittedGsim) -> Result<(f64, Vec<String>)> {
    let t = 2.0 * (alt.loglik - null.loglik);
    if !t.is_finite() {
        return Err(GsimError::Test("non-finite likelihood ratio".into()));
    }
    if t < -NEGATIVE_STATISTIC_TOLERANCE {
        return Err(GsimError::Fit(format!(
            "the alternative fit is worse than the null fit (T = {t:.3e}); the outer optimization missed the optimum"
        )));
    }
    let mut warnings = Vec::new();
    if t < 0.0 {
        warnings.push(format!("statistic {t:.3e} clamped to 0"));
    }
    Ok((t.max(0.0), warnings))
}

fn chi_squared_sf(x: f64, df: usize) -> Result<f64> {
    if df == 0 || x <= 0.0 {
        return Ok(1.0);
    }
    let dist = ChiSquared::new(df as f64).map_err(|e| GsimError::Test(e.to_string()))?;
    Ok(dist.sf(x).clamp(0.0, 1.0))
}

/// `P(F_{r, m} > x)`.
pub fn f_sf(x: f64, r: usize, m: f64) -> Result<f64> {
    if !(m > 0.0) {
        return Err(GsimError::DegenerateDf(format!("denominator df {m} is not positive")));
    }
    if r == 0 || x <= 0.0 {
        return Ok(1.0);
    }
    let dist = FisherSnedecor::new(r as f64, m).map_err(|e| GsimError::Test(e.to_string()))?;
    Ok(dist.sf(x).clamp(0.0, 1.0))
}

/// PLRT referred to `φ̂χ²_r`, with `φ̂` from the alternative fit.
pub fn plrt(null: &FittedGsim, alt: &FittedGsim, r: usize) -> Result<TestResult> {
    check_nested(null, alt, r)?;
    let (t, warnings) = likelihood_ratio(null, alt)?;
    let phi = alt.dispersion;
    Ok(TestResult {
        statistic: t,
        r,
        denom_df: None,
        reference: Reference::ChiSquaredScaled,
        p_value: chi_squared_sf(t / phi, r)?,
        dispersion_used: phi,
        lambda_null: Some(null.lambda),
        lambda_alt: Some(alt.lambda),
        warnings,
    })
}

/// PLRT referred to `r φ̂ F_{r, n − edf(H₁)}`, with `edf(H₁)` the total edf.
pub fn plrt_f_adjusted(
    null: &FittedGsim,
    alt: &FittedGsim,
    r: usize,
    n: usize,
) -> Result<TestResult> {
    check_nested(null, alt, r)?;
    let denom = n as f64 - alt.edf;
    if !(denom > 0.0) {
        return Err(GsimError::DegenerateDf(format!(
            "n − edf(H₁) = {denom:.3} is not positive"
        )));
    }
    let (t, warnings) = likelihood_ratio(null, alt)?;
    let phi = alt.dispersion;
    Ok(TestResult {
        statistic: t,
        r,
        denom_df: Some(denom),
        reference: Reference::FScaled,
        p_value: f_sf(t / (r.max(1) as f64 * phi), r, denom)?,
        dispersion_used: phi,
        lambda_null: Some(null.lambda),
        lambda_alt: Some(alt.lambda),
        warnings,
    })
}

/// Equivalent standard error of one coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalentSe {
    /// 0-based covariate index.
    pub index: usize,
    pub beta: f64,
    /// `T_j = 2(ℓ̂ − ℓ̂_{β_j = 0})`.
    pub statistic: f64,
    pub dispersion: f64,
    /// `None` when `β̂_j = 0`; `+∞` when `T_j ≤ 0`.
    pub se: Option<f64>,
    pub lambda_null: f64,
    pub warnings: Vec<String>,
}

/// `√φ̂ |β̂_j| / √T_j`, with the conventions for degenerate inputs.
pub fn equivalent_se_from_statistic(dispersion: f64, beta_j: f64, t_j: f64) -> Option<f64> {
    if beta_j == 0.0 {
        return None;
    }
    if t_j <= 0.0 {
        return Some(f64::INFINITY);
    }
    Some(dispersion.sqrt() * beta_j.abs() / t_j.sqrt())
}

/// Equivalent standard error of `β̂_j`: fits `β_j = 0` (also started from
/// `unrestricted`), then the unrestricted model at that fit's λ, and inverts
/// the likelihood ratio between the two.
pub fn equivalent_se(
    dataset: &Dataset,
    config: &FitConfig,
    unrestricted: &FittedGsim,
    j: usize,
) -> Result<EquivalentSe> {
    if j >= dataset.d() {
        return Err(GsimError::Usage(format!("covariate index {j} out of range")));
    }
    if !unrestricted.drop_set.is_empty() || unrestricted.free_dim() != dataset.d() {
        return Err(GsimError::Usage(
            "equivalent standard errors need the unrestricted fit".into(),
        ));
    }
    if !unrestricted.same_data(dataset) {
        return Err(GsimError::Usage("fit was computed on different data".into()));
    }
    let constraint = HypothesisConstraint::drop(dataset.d(), &[j])?;
    let null = fit_null_from(dataset, config, &constraint, unrestricted)?;
    let alt = fit_alternative(dataset, config, &null, &[unrestricted])?;
    Ok(equivalent_se_given_null(&alt, &null, j))
}

/// Equivalent standard error of `β̂_j` from an already fitted `β_j = 0` model.
pub fn equivalent_se_given_null(alt: &FittedGsim, null: &FittedGsim, j: usize) -> EquivalentSe {
    let t = 2.0 * (alt.loglik - null.loglik);
    let beta = alt.beta[j];
    let mut warnings = Vec::new();
    let se = equivalent_se_from_statistic(alt.dispersion, beta, t);
    if beta == 0.0 {
        warnings.push(format!("β̂_{} = 0: equivalent SE not available", j + 1));
    } else if t <= 0.0 {
        warnings.push(format!(
            "T_{} = {t:.3e} ≤ 0: no evidence against β_{} = 0 at the optimum",
            j + 1,
            j + 1
        ));
    }
    EquivalentSe {
        index: j,
        beta,
        statistic: t,
        dispersion: alt.dispersion,
        se,
        lambda_null: null.lambda,
        warnings,
    }
}

/// Per-observation derivatives `d_i = ∂η_i/∂θ`, `θ = (φ, δ)`, as rows.
fn eta_derivatives(dataset: &Dataset, fit: &FittedGsim) -> Result<DMatrix<f64>> {
    if fit.phi.near_boundary() {
        return Err(GsimError::Singular(
            "fitted φ̂ lies on the boundary of the unit ball".into(),
        ));
    }
    let jb = fit.beta_jacobian()?;
    let x = dataset.x();
    let xj = x * &jb;
    let z = fit.index(dataset);
    let k = jb.ncols();
    let p = fit.basis.dim();
    let mut out = DMatrix::zeros(dataset.n(), k + p);
    let mut row = vec![0.0; p];
    for i in 0..dataset.n() {
        fit.basis.eval_into(z[i], 1, &mut row);
        let slope: f64 = row.iter().zip(fit.delta.iter()).map(|(a, b)| a * b).sum();
        for c in 0..k {
            out[(i, c)] = slope * xj[(i, c)];
        }
        fit.basis.eval_into(z[i], 0, &mut row);
        for c in 0..p {
            out[(i, k + c)] = row[c];
        }
    }
    Ok(out)
}

/// Plug-in Fisher information `Î = (1/n) Σ b″(η̂_i) d_i d_iᵀ` for `θ = (φ, δ)`.
pub fn fisher_information(dataset: &Dataset, fit: &FittedGsim) -> Result<DMatrix<f64>> {
    let dmat = eta_derivatives(dataset, fit)?;
    let eta = fit.eta(dataset);
    let mut weighted = dmat.clone();
    for (i, mut row) in weighted.row_iter_mut().enumerate() {
        row *= fit.family.variance_unscaled(eta[i])?;
    }
    let info = dmat.tr_mul(&weighted) / dataset.n() as f64;
    Ok((&info + info.transpose()) * 0.5)
}

/// Wald covariance of `(β̂, δ̂)`.
#[derive(Debug, Clone)]
pub struct WaldCovariance {
    /// `(d + dim) × (d + dim)`, `β` block first.
    pub matrix: DMatrix<f64>,
    /// A ridge was added to invert a near-singular information.
    pub regularized: bool,
    pub condition_number: f64,
}

impl WaldCovariance {
    pub fn beta_block(&self, d: usize) -> DMatrix<f64> {
        self.matrix.view((0, 0), (d, d)).into_owned()
    }

    /// Wald standard errors of `β̂`.
    pub fn beta_se(&self, d: usize) -> DVector<f64> {
        DVector::from_fn(d, |j, _| self.matrix[(j, j)].max(0.0).sqrt())
    }
}

/// `(φ̂/n) J̃ Î⁻¹ J̃ᵀ` with `J̃ = diag(∂β/∂φ, I)`.
pub fn wald_covariance(dataset: &Dataset, fit: &FittedGsim) -> Result<WaldCovariance> {
    let info = fisher_information(dataset, fit)?;
    let q = info.nrows();
    let eig = info.clone().symmetric_eigen();
    let max_ev = eig.eigenvalues.max();
    let min_ev = eig.eigenvalues.min();
    let condition_number = if min_ev > 0.0 { max_ev / min_ev } else { f64::INFINITY };
    let mut regularized = false;
    let mut target = info;
    if !(condition_number < 1e12) {
        let ridge = 1e-8 * target.trace() / q as f64;
        for i in 0..q {
            target[(i, i)] += ridge;
        }
        regularized = true;
    }
    let inverse = target
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| GsimError::Singular("Fisher information is not positive definite".into()))?;
    let jb = fit.beta_jacobian()?;
    let (d, k) = jb.shape();
    let p = fit.basis.dim();
    let mut jt = DMatrix::zeros(d + p, k + p);
    jt.view_mut((0, 0), (d, k)).copy_from(&jb);
    for c in 0..p {
        jt[(d + c, k + c)] = 1.0;
    }
    let cov = &jt * inverse * jt.transpose() * (fit.dispersion / dataset.n() as f64);
    Ok(WaldCovariance {
        matrix: (&cov + cov.transpose()) * 0.5,
        regularized,
        condition_number,
    })
}

/// `W = (Mβ̂)ᵀ (M Cov_β Mᵀ)⁻¹ (Mβ̂)` referred to `χ²_r`.
pub fn wald_test(
    fit: &FittedGsim,
    cov: &WaldCovariance,
    constraint: &HypothesisConstraint,
) -> Result<TestResult> {
    let d = fit.d();
    if constraint.dim() != d {
        return Err(GsimError::Constraint("M does not match the fit's dimension".into()));
    }
    let r = constraint.rank();
    let mb = constraint.apply(&fit.beta);
    let (statistic, p_value) = if r == 0 || mb.amax() == 0.0 {
        (0.0, 1.0)
    } else {
        let m = constraint.matrix();
        let v = m * cov.beta_block(d) * m.transpose();
        let v = (&v + v.transpose()) * 0.5;
        let chol = v.cholesky().ok_or_else(|| {
            GsimError::Test("M Cov Mᵀ is singular; the Wald statistic is undefined".into())
        })?;
        let w = mb.dot(&chol.solve(&mb));
        (w, chi_squared_sf(w, r)?)
    };
    let mut warnings = Vec::new();
    if cov.regularized {
        warnings.push("Fisher information was ridge-regularized before inversion".into());
    }
    Ok(TestResult {
        statistic,
        r,
        denom_df: None,
        reference: Reference::WaldChiSquared,
        p_value,
        dispersion_used: fit.dispersion,
        lambda_null: None,
        lambda_alt: Some(fit.lambda),
        warnings,
    })
}
