use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::Dataset;
use crate::error::{GsimError, Result};
use crate::expfam::{DispersionPolicy, Family};
use crate::splines::{place_knots, SplineBasis};

use super::bfgs::{minimize, minimize_split, BfgsOptions};
use super::pirls::{pearson, InnerFit, InnerProblem};
use super::sphere::{
    beta_from_phi, free_from_phi, free_jacobian, jacobian_beta_phi, phi_from_free, SphereParam,
};
use super::FitConfig;

/// Largest `‖φ‖` used for a starting point.
const START_RADIUS: f64 = 1.0 - 1e-3;
/// Restarts landing this close to a finished candidate after one cycle are dropped.
const DUPLICATE_RADIUS: f64 = 1e-3;

/// A converged single-index fit under one hypothesis.
#[derive(Debug, Clone)]
pub struct FittedGsim {
    /// Sphere coordinates of the free index direction.
    pub phi: SphereParam,
    /// Index coefficients on the original covariates (zeros at dropped positions).
    pub beta: DVector<f64>,
    /// Spline coefficients of `g` on `basis`.
    pub delta: DVector<f64>,
    pub lambda: f64,
    pub basis: SplineBasis,
    /// Maximized unscaled log-likelihood kernel `Σ y η − b(η)`.
    pub loglik: f64,
    /// `loglik − (n/2) λ δᵀDδ`.
    pub penalized_loglik: f64,
    /// `edf_smooth + (d′ − 1)`.
    pub edf: f64,
    pub edf_smooth: f64,
    /// Smoothing criterion at `(β̂, λ)`: GCV for families with an estimated
    /// dispersion, UBRE otherwise. Competing fits are ranked by it.
    pub smoothing_score: f64,
    pub dispersion: f64,
    pub converged: bool,
    pub boundary_warning: bool,
    /// The binomial `|η| ≤ 30` guard was active at some point.
    pub separation_flag: bool,
    /// Covariates constrained to zero (0-based).
    pub drop_set: Vec<usize>,
    pub n: usize,
    pub family: Family,
    /// Profile log-likelihood at the winning start, then at every accepted polishing step.
    pub trajectory: Vec<f64>,
    pub outer_iterations: usize,
    pub starts_tried: usize,
    pub warnings: Vec<String>,
    /// Orthonormal `d × d′` map from the free coordinates to `β`.
    pub(crate) embedding: DMatrix<f64>,
    /// `±1`: `β = orientation · embedding · β(φ)`.
    pub(crate) orientation: f64,
    pub(crate) fingerprint: u64,
}

impl FittedGsim {
    pub fn d(&self) -> usize {
        self.beta.len()
    }

    /// Dimension of the free index space.
    pub fn free_dim(&self) -> usize {
        self.embedding.ncols()
    }

    pub fn embedding(&self) -> &DMatrix<f64> {
        &self.embedding
    }

    /// Index values `x_iᵀβ̂`.
    pub fn index(&self, dataset: &Dataset) -> DVector<f64> {
        dataset.x() * &self.beta
    }

    /// Fitted natural parameters `ĝ(x_iᵀβ̂)`.
    pub fn eta(&self, dataset: &Dataset) -> DVector<f64> {
        let z = self.index(dataset);
        self.basis.design(z.as_slice(), 0) * &self.delta
    }

    /// Fitted means `b′(η̂_i)`.
    pub fn fitted_means(&self, dataset: &Dataset) -> Result<DVector<f64>> {
        let eta = self.eta(dataset);
        let mut mu = DVector::zeros(eta.len());
        for (m, &e) in mu.iter_mut().zip(eta.iter()) {
            *m = self.family.mean(e)?;
        }
        Ok(mu)
    }

    /// The same fitted model under the alternative identifiability constraint
    /// `β₁ = 1`: coefficients `β̂/β̂₁` with the link argument rescaled so that
    /// `g̃(xᵀβ̂/β̂₁) = ĝ(xᵀβ̂)`. Fails when `β̂₁ = 0`.
    pub fn leading_one_form(&self) -> Result<LeadingOneForm> {
        let scale = self.beta[0];
        if scale == 0.0 || !scale.is_finite() {
            return Err(GsimError::Usage("β̂₁ = 0: the constraint β₁ = 1 is unavailable".into()));
        }
        Ok(LeadingOneForm {
            beta: &self.beta / scale,
            scale,
            basis: self.basis.clone(),
            delta: self.delta.clone(),
            family: self.family,
        })
    }

    /// `∂β/∂φ` on the original coordinates (`d × (d′−1)`).
    pub fn beta_jacobian(&self) -> Result<DMatrix<f64>> {
        Ok(&self.embedding * jacobian_beta_phi(&self.phi)? * self.orientation)
    }

    /// Ranks competing fits of one model: at a common λ the larger profile
    /// log-likelihood wins, across different λ the smaller smoothing criterion.
    pub fn preferred_over(&self, other: &FittedGsim) -> bool {
        if self.lambda == other.lambda {
            self.loglik > other.loglik
        } else {
            self.smoothing_score < other.smoothing_score
        }
    }

    pub(crate) fn same_data(&self, dataset: &Dataset) -> bool {
        self.fingerprint == dataset.fingerprint()
    }
}

/// A fit expressed under the constraint `β₁ = 1`; see
/// [`FittedGsim::leading_one_form`].
#[derive(Debug, Clone)]
pub struct LeadingOneForm {
    /// Index coefficients with `β₁ = 1`.
    pub beta: DVector<f64>,
    /// `β̂₁` of the unit-norm fit: `g̃(t) = ĝ(scale · t)`.
    pub scale: f64,
    basis: SplineBasis,
    delta: DVector<f64>,
    family: Family,
}

impl LeadingOneForm {
    /// `g̃(xᵀβ̃)` for every observation.
    pub fn eta(&self, dataset: &Dataset) -> DVector<f64> {
        let t = dataset.x() * &self.beta;
        let z: Vec<f64> = t.iter().map(|v| v * self.scale).collect();
        self.basis.design(&z, 0) * &self.delta
    }

    /// Unscaled log-likelihood kernel `Σ y η − b(η)` of the reparametrized fit.
    pub fn loglik(&self, dataset: &Dataset) -> Result<f64> {
        let eta = self.eta(dataset);
        let mut total = 0.0;
        for (&y, &e) in dataset.y().iter().zip(eta.iter()) {
            total += self.family.loglik_kernel(y, e)?;
        }
        Ok(total)
    }
}

/// Fits the GSIM with the covariates in `drop_set` (0-based) constrained to zero.
pub fn fit_gsim(dataset: &Dataset, config: &FitConfig, drop_set: &[usize]) -> Result<FittedGsim> {
    let d = dataset.d();
    let mut drops = drop_set.to_vec();
    drops.sort_unstable();
    drops.dedup();
    if drops.len() != drop_set.len() || drops.iter().any(|&j| j >= d) {
        return Err(GsimError::Usage(format!(
            "drop set {drop_set:?} is not a set of covariate indices below {d}"
        )));
    }
    if drops.len() >= d {
        return Err(GsimError::Usage("cannot drop every covariate".into()));
    }
    let kept: Vec<usize> = (0..d).filter(|j| !drops.contains(j)).collect();
    let mut embedding = DMatrix::zeros(d, kept.len());
    for (c, &j) in kept.iter().enumerate() {
        embedding[(j, c)] = 1.0;
    }
    fit_embedded(dataset, config, embedding, drops, &[])
}

/// Fits with `β` restricted to the column space of `embedding` (orthonormal columns).
/// `extra_starts` are additional starting directions on the original coordinates.
pub(crate) fn fit_embedded(
    dataset: &Dataset,
    config: &FitConfig,
    embedding: DMatrix<f64>,
    drop_set: Vec<usize>,
    extra_starts: &[DVector<f64>],
) -> Result<FittedGsim> {
    let xr = prepare(dataset, config, &embedding)?;
    let ws = Workspace::new(&xr, dataset, config);
    let dprime = xr.ncols();
    if dprime == 1 {
        let best = ws.polish(DVector::zeros(0), 1)?;
        return ws.assemble(dataset, best, embedding, drop_set);
    }

    let mut starts = Vec::new();
    if let Some(b) = glm_direction(&xr, dataset.y(), dataset.family()) {
        starts.push(b);
    }
    for s in extra_starts {
        let r = embedding.tr_mul(s);
        if r.norm() > 1e-8 {
            starts.push(r);
        }
    }
    starts.extend(ws.screened_directions(config.n_restarts));
    if starts.is_empty() {
        starts.push(DVector::from_fn(dprime, |i, _| if i == 0 { 1.0 } else { 0.0 }));
    }

    // Phase 1: cheap search from every start; restarts that fall into the
    // basin of an earlier candidate are abandoned.
    let mut found: Vec<Searched> = Vec::new();
    let mut errors = Vec::new();
    for s in &starts {
        let known: Vec<DVector<f64>> = found.iter().map(|c| c.phi.clone()).collect();
        match ws.search(start_phi(s), &known) {
            Ok(Some(c)) => found.push(c),
            Ok(None) => {}
            Err(e) => errors.push(e.to_string()),
        }
    }
    if found.is_empty() {
        return Err(GsimError::Fit(format!(
            "all {} starts failed: {}",
            starts.len(),
            errors.join("; ")
        )));
    }
    found.sort_by(|a, b| b.kernel.total_cmp(&a.kernel));

    // Phase 2: polish the distinct candidates on the exact profile.
    let mut best: Option<Polished> = None;
    for cand in found {
        let polished = match ws.polish(cand.phi.clone(), starts.len()) {
            Ok(p) => p.merge_search(&cand),
            Err(e) => {
                errors.push(e.to_string());
                continue;
            }
        };
        if best.as_ref().is_none_or(|b| polished.beats(b)) {
            best = Some(polished);
        }
    }
    let best = best.ok_or_else(|| {
        GsimError::Fit(format!("every candidate failed to polish: {}", errors.join("; ")))
    })?;
    ws.assemble(dataset, best, embedding, drop_set)
}

/// Maximizes the profile from `start` (original coordinates) by the local
/// phase alone. The result never has a smaller profile log-likelihood than
/// the starting direction itself.
pub(crate) fn polish_embedded(
    dataset: &Dataset,
    config: &FitConfig,
    embedding: DMatrix<f64>,
    drop_set: Vec<usize>,
    start: &DVector<f64>,
) -> Result<FittedGsim> {
    let xr = prepare(dataset, config, &embedding)?;
    let ws = Workspace::new(&xr, dataset, config);
    let reduced = embedding.tr_mul(start);
    let phi0 = if xr.ncols() == 1 {
        DVector::zeros(0)
    } else {
        let r = reduced.norm();
        if !(r > 1e-8) {
            return Err(GsimError::Usage("starting direction is orthogonal to the model".into()));
        }
        let mut u = reduced / r;
        if u[0] < 0.0 {
            u = -u;
        }
        u.rows(1, u.len() - 1).into_owned()
    };
    let best = ws.polish(phi0, 1)?;
    ws.assemble(dataset, best, embedding, drop_set)
}

fn prepare(dataset: &Dataset, config: &FitConfig, embedding: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    config.validate()?;
    let xr = dataset.x() * embedding;
    let dprime = xr.ncols();
    let n = dataset.n();
    let basis_dim = match config.basis_kind {
        crate::splines::BasisKind::TruncatedCubic => config.n_knots + 4,
        crate::splines::BasisKind::CubicRegression => config.n_knots + 2,
    };
    if dprime == 0 {
        return Err(GsimError::Usage("no free index coefficients".into()));
    }
    if n <= dprime + basis_dim {
        return Err(GsimError::Data(format!(
            "{n} observations are too few for {dprime} index coefficients and {basis_dim} spline coefficients"
        )));
    }
    Ok(xr)
}

/// Random directions scored per retained restart.
const SCREEN_FACTOR: usize = 10;
/// Smoothing parameter used only to rank candidate directions.
const SCREEN_LAMBDA: f64 = 1e-3;

/// Central-difference step on the unconstrained outer coordinates.
const FD_STEP: f64 = 1e-5;

struct Workspace<'a> {
    xr: &'a DMatrix<f64>,
    y: &'a DVector<f64>,
    family: Family,
    config: &'a FitConfig,
    /// Inner tolerance for exact profile evaluations (finite differences need
    /// more digits than the search phase).
    exact_tol: f64,
}

/// The profile at one `φ`: knots placed on its index, λ by GCV, δ̂ by P-IRLS.
#[derive(Clone)]
struct Evaluation {
    basis: SplineBasis,
    lambda: f64,
    fit: InnerFit,
}

/// Outcome of the search phase from one start.
struct Searched {
    phi: DVector<f64>,
    kernel: f64,
    stationary: bool,
    clamped: bool,
    iterations: usize,
    start_profile: f64,
}

struct Polished {
    phi: DVector<f64>,
    eval: Evaluation,
    /// Smoothing criterion at the final `(φ, λ)`; smaller is better.
    score: f64,
    converged: bool,
    clamped: bool,
    iterations: usize,
    trajectory: Vec<f64>,
    starts_tried: usize,
}

struct Ascent {
    phi: DVector<f64>,
    iterations: usize,
    converged: bool,
    trajectory: Vec<f64>,
}

/// One completed step of the fixed-point iteration.
struct Visit {
    phi: DVector<f64>,
    eval: Evaluation,
    score: f64,
}

impl Polished {
    /// At a common λ the profile log-likelihood decides; across different
    /// λ the smoothing criterion does.
    fn beats(&self, other: &Polished) -> bool {
        if self.eval.lambda == other.eval.lambda {
            self.eval.fit.kernel > other.eval.fit.kernel
        } else {
            self.score < other.score
        }
    }

    fn merge_search(mut self, s: &Searched) -> Self {
        self.converged &= s.stationary;
        self.clamped |= s.clamped;
        self.iterations += s.iterations;
        self.trajectory.insert(0, s.start_profile);
        self
    }
}

impl<'a> Workspace<'a> {
    fn new(xr: &'a DMatrix<f64>, dataset: &'a Dataset, config: &'a FitConfig) -> Self {
        Self {
            xr,
            y: dataset.y(),
            family: dataset.family(),
            config,
            exact_tol: config.inner_tol.min(1e-12),
        }
    }

    fn beta(&self, phi: &DVector<f64>) -> Result<DVector<f64>> {
        beta_from_phi(&SphereParam::new(phi.clone())?)
    }

    fn problem<'p>(&'p self, design: &'p DMatrix<f64>, penalty: &'p DMatrix<f64>) -> InnerProblem<'p> {
        InnerProblem {
            family: self.family,
            y: self.y,
            design,
            penalty,
        }
    }

    /// Knots on the current index, λ by GCV, δ̂ by P-IRLS.
    fn evaluate(&self, phi: &DVector<f64>, tol: f64) -> Result<Evaluation> {
        let z = self.xr * self.beta(phi)?;
        let knots = place_knots(z.as_slice(), self.config.n_knots)?;
        let basis = SplineBasis::standardized(self.config.basis_kind, knots);
        let penalty = basis.penalty_matrix().0;
        let design = basis.design(z.as_slice(), 0);
        let sel = self
            .problem(&design, &penalty)
            .select_lambda(&self.config.lambda_grid, tol, self.config.max_inner)?;
        Ok(Evaluation {
            basis,
            lambda: sel.lambda,
            fit: sel.fit,
        })
    }

    /// Gradient of the penalized log-likelihood in `φ` at fixed basis and `δ`
    /// (by the envelope theorem, the gradient of the penalized profile).
    fn grad_phi(
        &self,
        phi: &DVector<f64>,
        basis: &SplineBasis,
        fit: &InnerFit,
        z: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        let p = basis.dim();
        let mut row = vec![0.0; p];
        let mut weighted = DVector::zeros(self.y.len());
        for i in 0..self.y.len() {
            basis.eval_into(z[i], 1, &mut row);
            let slope: f64 = row.iter().zip(fit.delta.iter()).map(|(a, b)| a * b).sum();
            weighted[i] = (self.y[i] - self.family.mean(fit.eta[i])?) * slope;
        }
        let jac = jacobian_beta_phi(&SphereParam::new(phi.clone())?)?;
        Ok(jac.tr_mul(&self.xr.tr_mul(&weighted)))
    }

    /// Search phase: alternate (re-place knots and re-select λ at the current
    /// index) with (BFGS on the penalized profile at that fixed basis and λ)
    /// until the index stops moving. Returns `None` when the path enters the
    /// basin of a known candidate.
    fn search(&self, phi0: DVector<f64>, known: &[DVector<f64>]) -> Result<Option<Searched>> {
        let cfg = self.config;
        let n = self.y.len() as f64;
        let mut phi = phi0;
        let mut iterations = 0;
        let mut clamped = false;
        let mut stationary = false;
        let mut start_profile = f64::NAN;
        let mut previous: Option<(f64, f64)> = None;
        let mut kernel = f64::NAN;
        for cycle in 0..cfg.max_cycles {
            let eval = self.evaluate(&phi, cfg.inner_tol)?;
            clamped |= eval.fit.clamped;
            if cycle == 0 {
                start_profile = eval.fit.kernel;
            }
            let penalty = eval.basis.penalty_matrix().0;
            let (basis, lambda) = (&eval.basis, eval.lambda);
            let mut warm = eval.fit.delta.clone();
            let objective = |w: &DVector<f64>| -> Option<(f64, DVector<f64>)> {
                let p = phi_from_free(w);
                let z = self.xr * self.beta(&p).ok()?;
                let design = basis.design(z.as_slice(), 0);
                let fit = self
                    .problem(&design, &penalty)
                    .fit_core(lambda, Some(&warm), cfg.inner_tol, cfg.max_inner)
                    .ok()?;
                let g_phi = self.grad_phi(&p, basis, &fit, &z).ok()?;
                let g_w = free_jacobian(w).tr_mul(&g_phi);
                warm = fit.delta.clone();
                Some((-fit.penalized, -g_w))
            };
            let budget = cfg.max_outer.saturating_sub(iterations).max(1);
            let outcome = minimize(
                objective,
                free_from_phi(&phi),
                BfgsOptions {
                    xtol: cfg.outer_tol,
                    gtol: 1e-7 * n,
                    max_iter: budget,
                    initial_step: 0.1,
                    max_backtracks: 40,
                },
            )
            .ok_or_else(|| GsimError::Fit("outer objective undefined at the start".into()))?;
            iterations += outcome.iterations;
            let new_phi = phi_from_free(&outcome.x);
            let moved = (&new_phi - &phi).norm();
            phi = new_phi;
            stationary = outcome.converged || outcome.grad.amax() < 1e-4 * n;
            kernel = -outcome.value;
            let settled = previous.is_some_and(|(l, k)| {
                l == lambda && (kernel - k).abs() <= cfg.inner_tol * (k.abs() + 1.0)
            });
            previous = Some((lambda, kernel));
            if known.iter().any(|k| (k - &phi).norm() < DUPLICATE_RADIUS) {
                return Ok(None);
            }
            if moved < cfg.outer_tol || settled || iterations >= cfg.max_outer {
                break;
            }
        }
        Ok(Some(Searched {
            phi,
            kernel,
            stationary,
            clamped,
            iterations,
            start_profile,
        }))
    }

    /// `count` restart directions: the best-scoring of `SCREEN_FACTOR · count`
    /// seeded random unit vectors, scored by the profile at a fixed moderate λ.
    fn screened_directions(&self, count: usize) -> Vec<DVector<f64>> {
        let dprime = self.xr.ncols();
        let mut rng = ChaCha8Rng::seed_from_u64(
            self.config.seed ^ (dprime as u64).wrapping_mul(0x9E37_79B9),
        );
        let mut scored: Vec<(f64, DVector<f64>)> = (0..count * SCREEN_FACTOR)
            .map(|_| {
                let v = DVector::from_fn(dprime, |_, _| StandardNormal.sample(&mut rng));
                let score = self
                    .evaluate_at(&start_phi(&v), SCREEN_LAMBDA)
                    .map(|f| f.kernel)
                    .unwrap_or(f64::NEG_INFINITY);
                (if score.is_nan() { f64::NEG_INFINITY } else { score }, v)
            })
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0));
        scored.into_iter().take(count).map(|(_, v)| v).collect()
    }

    /// The profile at a fixed λ: knots placed on the index, δ̂ by P-IRLS
    /// (effective degrees of freedom left unset).
    fn evaluate_at(&self, phi: &DVector<f64>, lambda: f64) -> Result<InnerFit> {
        let z = self.xr * self.beta(phi)?;
        let knots = place_knots(z.as_slice(), self.config.n_knots)?;
        let basis = SplineBasis::standardized(self.config.basis_kind, knots);
        let penalty = basis.penalty_matrix().0;
        let design = basis.design(z.as_slice(), 0);
        self.problem(&design, &penalty)
            .fit_core(lambda, None, self.exact_tol, self.config.max_inner)
    }

    /// The fit at `φ` with a given λ, including its effective degrees of
    /// freedom and smoothing criterion.
    fn score_at(&self, phi: &DVector<f64>, lambda: f64) -> Result<(Evaluation, f64)> {
        let z = self.xr * self.beta(phi)?;
        let knots = place_knots(z.as_slice(), self.config.n_knots)?;
        let basis = SplineBasis::standardized(self.config.basis_kind, knots);
        let penalty = basis.penalty_matrix().0;
        let design = basis.design(z.as_slice(), 0);
        let problem = self.problem(&design, &penalty);
        let fit = problem.fit(lambda, None, self.exact_tol, self.config.max_inner)?;
        let score = problem.criterion(&fit)?;
        Ok((Evaluation { basis, lambda, fit }, score))
    }

    /// Local ascent of the profile `pl(β(φ))` at a fixed λ. Knots are
    /// re-placed on the index at every evaluation; the gradient is by central
    /// differences and only uphill steps are accepted.
    fn ascend(&self, phi0: &DVector<f64>, lambda: f64) -> Result<Ascent> {
        if phi0.is_empty() {
            return Ok(Ascent { phi: phi0.clone(), iterations: 0, converged: true, trajectory: vec![] });
        }
        let cfg = self.config;
        let value = |w: &DVector<f64>| -> Option<f64> {
            let fit = self.evaluate_at(&phi_from_free(w), lambda).ok()?;
            fit.kernel.is_finite().then_some(-fit.kernel)
        };
        let objective = |w: &DVector<f64>, want_grad: bool| -> Option<(f64, Option<DVector<f64>>)> {
            let v = value(w)?;
            if !want_grad {
                return Some((v, None));
            }
            let mut g = DVector::zeros(w.len());
            for c in 0..w.len() {
                let mut up = w.clone();
                up[c] += FD_STEP;
                let mut dn = w.clone();
                dn[c] -= FD_STEP;
                g[c] = match (value(&up), value(&dn)) {
                    (Some(a), Some(b)) => (a - b) / (2.0 * FD_STEP),
                    (Some(a), None) => (a - v) / FD_STEP,
                    (None, Some(b)) => (v - b) / FD_STEP,
                    (None, None) => return None,
                };
            }
            Some((v, Some(g)))
        };
        let outcome = minimize_split(
            objective,
            free_from_phi(phi0),
            BfgsOptions {
                xtol: cfg.outer_tol,
                gtol: 1e-9 * self.y.len() as f64,
                max_iter: cfg.max_outer,
                initial_step: 0.01,
                max_backtracks: 20,
            },
        )
        .ok_or_else(|| GsimError::Fit("profile undefined at the polishing start".into()))?;
        Ok(Ascent {
            phi: phi_from_free(&outcome.x),
            iterations: outcome.iterations,
            // A failed line search means no uphill step exists at working
            // precision; only running out of iterations is non-convergence.
            converged: outcome.iterations < cfg.max_outer,
            trajectory: outcome.trajectory.iter().map(|v| -v).collect(),
        })
    }

    /// Final estimation from `phi0`: a fixed point of (choose λ by the
    /// smoothing criterion at the current index) and (maximize the profile
    /// at that λ). Iterates until λ repeats; if the iteration cycles, the
    /// visited point with the smallest criterion is kept.
    fn polish(&self, phi0: DVector<f64>, starts_tried: usize) -> Result<Polished> {
        let first = self.evaluate(&phi0, self.exact_tol)?;
        let mut trajectory = vec![first.fit.kernel];
        let mut iterations = 0;
        let mut converged = true;
        let mut clamped = first.fit.clamped;
        let mut lambda = first.lambda;
        let mut phi = phi0;
        let mut visited: Vec<Visit> = Vec::new();
        let mut settled = false;
        for _ in 0..self.config.max_cycles {
            let ascent = self.ascend(&phi, lambda)?;
            iterations += ascent.iterations;
            converged &= ascent.converged;
            trajectory.extend(ascent.trajectory.iter().skip(1));
            let (eval, score) = self.score_at(&ascent.phi, lambda)?;
            clamped |= eval.fit.clamped;
            phi = ascent.phi.clone();
            visited.push(Visit { phi: ascent.phi, eval, score });
            let next = self.evaluate(&phi, self.exact_tol)?.lambda;
            if next == lambda {
                settled = true;
                break;
            }
            if visited.iter().any(|v| v.eval.lambda == next) {
                break;
            }
            lambda = next;
        }
        let best = if settled {
            visited.pop()
        } else {
            visited.into_iter().min_by(|a, b| a.score.total_cmp(&b.score))
        }
        .ok_or_else(|| GsimError::Fit("no polishing step completed".into()))?;
        Ok(Polished {
            phi: best.phi,
            eval: best.eval,
            score: best.score,
            converged,
            clamped,
            iterations,
            trajectory,
            starts_tried,
        })
    }

    fn assemble(
        &self,
        dataset: &Dataset,
        cand: Polished,
        embedding: DMatrix<f64>,
        drop_set: Vec<usize>,
    ) -> Result<FittedGsim> {
        let sphere = SphereParam::new(cand.phi.clone())?;
        let reduced = beta_from_phi(&sphere)?;
        let mut beta = &embedding * &reduced;
        let mut orientation = 1.0;
        let Evaluation { mut basis, lambda, fit: mut inner } = cand.eval;
        let mut warnings = Vec::new();
        // Sign rule: first non-negligible coordinate of β is positive. The
        // index is reversed, so the knots are mirrored and δ refitted.
        if let Some(first) = beta.iter().find(|v| v.abs() > 1e-12) {
            if *first < 0.0 {
                orientation = -1.0;
                beta = -beta;
                let (lo, hi) = basis.knots().boundary();
                let mirrored: Vec<f64> = basis.knots().interior().iter().rev().map(|k| -k).collect();
                let knots = crate::splines::KnotSequence::new(mirrored, -hi, -lo)?;
                basis = SplineBasis::standardized(basis.kind(), knots);
                let penalty = basis.penalty_matrix().0;
                let z = dataset.x() * &beta;
                let design = basis.design(z.as_slice(), 0);
                inner = self.problem(&design, &penalty).fit(
                    lambda,
                    None,
                    self.exact_tol,
                    self.config.max_inner,
                )?;
            }
        }
        if inner.edf_smooth.is_nan() {
            return Err(GsimError::Fit("effective degrees of freedom unavailable".into()));
        }
        let boundary_warning = sphere.near_boundary();
        if boundary_warning {
            warnings.push(format!(
                "‖φ̂‖ = {:.9} is within 1e-6 of the unit sphere",
                sphere.as_vector().norm()
            ));
        }
        if !cand.converged {
            warnings.push("outer optimization stopped before convergence".into());
        }
        let separation_flag = cand.clamped || inner.clamped;
        if separation_flag {
            warnings.push("binomial natural parameter clamped at ±30".into());
        }
        let edf = inner.edf_smooth + (embedding.ncols() as f64 - 1.0);
        let mut fit = FittedGsim {
            phi: sphere,
            beta,
            delta: inner.delta.clone(),
            lambda,
            basis,
            loglik: inner.kernel,
            penalized_loglik: inner.penalized,
            edf,
            edf_smooth: inner.edf_smooth,
            smoothing_score: cand.score,
            dispersion: 1.0,
            converged: cand.converged,
            boundary_warning,
            separation_flag,
            drop_set,
            n: dataset.n(),
            family: dataset.family(),
            trajectory: cand.trajectory,
            outer_iterations: cand.iterations,
            starts_tried: cand.starts_tried,
            warnings,
            embedding,
            orientation,
            fingerprint: dataset.fingerprint(),
        };
        fit.dispersion = estimate_dispersion(&fit, dataset)?;
        Ok(fit)
    }
}

/// `φ` of the normalized direction `v`, sign-flipped into `β₁ ≥ 0` and pulled
/// slightly inside the ball.
fn start_phi(v: &DVector<f64>) -> DVector<f64> {
    let mut u = v / v.norm();
    if u[0] < 0.0 {
        u = -u;
    }
    let mut phi = u.rows(1, u.len() - 1).into_owned();
    let r = phi.norm();
    if r > START_RADIUS {
        phi *= START_RADIUS / r;
    }
    phi
}

/// Slope direction of a canonical-link GLM with intercept.
fn glm_direction(x: &DMatrix<f64>, y: &DVector<f64>, family: Family) -> Option<DVector<f64>> {
    let (n, d) = x.shape();
    let mut a = DMatrix::zeros(n, d + 1);
    a.column_mut(0).fill(1.0);
    a.columns_mut(1, d).copy_from(x);
    let mut eta = DVector::from_fn(n, |i, _| family.canonical_link(family.starting_mean(y[i])));
    let mut coef = DVector::zeros(d + 1);
    for _ in 0..25 {
        let mut w = DVector::zeros(n);
        let mut z = DVector::zeros(n);
        for i in 0..n {
            let e = if family == Family::Binomial { eta[i].clamp(-30.0, 30.0) } else { eta[i] };
            if !family.in_domain(e) {
                return None;
            }
            let v = family.variance_unscaled(e).ok()?.max(1e-10);
            w[i] = v;
            z[i] = e + (y[i] - family.mean(e).ok()?) / v;
        }
        let mut aw = a.clone();
        for (mut row, &wi) in aw.row_iter_mut().zip(w.iter()) {
            row *= wi;
        }
        let mut h = a.tr_mul(&aw);
        for j in 1..=d {
            h[(j, j)] += 1e-8 * h[(j, j)].max(1e-12);
        }
        let next = h.cholesky()?.solve(&aw.tr_mul(&z));
        let change = (&next - &coef).amax();
        coef = next;
        eta = &a * &coef;
        if change < 1e-8 {
            break;
        }
    }
    let slope = coef.rows(1, d).into_owned();
    (slope.norm() > 0.0 && slope.iter().all(|v| v.is_finite())).then_some(slope)
}

/// Pearson moment estimate `Σ (y − μ̂)²/v̂ / (n − edf)`; one for fixed-dispersion families.
pub fn estimate_dispersion(fit: &FittedGsim, dataset: &Dataset) -> Result<f64> {
    if fit.family.dispersion_policy() == DispersionPolicy::FixedOne {
        return Ok(1.0);
    }
    let resid_df = dataset.n() as f64 - fit.edf;
    if resid_df <= 0.0 {
        return Err(GsimError::DegenerateDf(format!(
            "n = {} does not exceed edf = {:.3}",
            dataset.n(),
            fit.edf
        )));
    }
    Ok(pearson(fit.family, dataset.y(), &fit.eta(dataset))? / resid_df)
}
