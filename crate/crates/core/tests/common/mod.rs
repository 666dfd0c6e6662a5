//! Shared builders and reference computations for the integration tests.
#![allow(dead_code)]

use gsim::data::Dataset;
use gsim::expfam::Family;
use gsim::fitter::{FitConfig, SphereParam};
use gsim::splines::{place_knots, BasisKind, SplineBasis};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `y = 0.5 + xᵀb + ε` with `x_ij, ε ~ N(0, 1)`; the last coefficient of `b` is zero.
pub fn linear_gaussian(n: usize, d: usize, seed: u64) -> Dataset {
    let mut r = rng(seed);
    let x = DMatrix::from_fn(n, d, |_, _| r.sample::<f64, _>(StandardNormal));
    let b = DVector::from_fn(d, |j, _| if j + 1 == d { 0.0 } else { 1.0 / (j + 1) as f64 });
    let noise = Normal::new(0.0, 1.0).unwrap();
    let y = DVector::from_fn(n, |i, _| 0.5 + x.row(i).dot(&b.transpose()) + noise.sample(&mut r));
    Dataset::new(x, y, Family::Gaussian).unwrap()
}

/// Residual sum of squares of least squares on `[1, X]`.
pub fn ols_rss(x: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    let n = x.nrows();
    let design = DMatrix::from_fn(n, x.ncols() + 1, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] });
    let coef = design.clone().svd(true, true).solve(y, 1e-12).unwrap();
    (y - design * coef).norm_squared()
}

/// Covariates `x_ij ~ N(0, 1)` and a valid response of each family.
pub fn random_dataset(family: Family, n: usize, d: usize, seed: u64) -> Dataset {
    let mut r = rng(seed);
    let x = DMatrix::from_fn(n, d, |_, _| r.sample::<f64, _>(StandardNormal));
    let y = DVector::from_fn(n, |i, _| {
        let t = x[(i, 0)] - 0.5 * x[(i, d - 1)];
        match family {
            Family::Gaussian => t.sin() + 0.3 * r.sample::<f64, _>(StandardNormal),
            Family::Binomial => f64::from(r.random::<f64>() < 1.0 / (1.0 + (-t).exp())),
            Family::Poisson => Poisson::new((0.4 * t).exp()).unwrap().sample(&mut r),
            Family::Gamma => (1.0 + 0.2 * t.tanh()) * (0.2 + r.random::<f64>()),
        }
    });
    Dataset::new(x, y, family).unwrap()
}

/// A random interior point `(φ, δ)` with knots at the index quantiles.
/// `δ` reproduces a family-appropriate link plus a small perturbation.
pub fn random_point(dataset: &Dataset, kind: BasisKind, seed: u64) -> (SphereParam, DVector<f64>, SplineBasis) {
    let mut r = rng(seed);
    let d = dataset.d();
    let radius = 0.8 * r.random::<f64>();
    let dir = DVector::from_fn(d - 1, |_, _| r.sample::<f64, _>(StandardNormal)).normalize();
    let phi = SphereParam::new(dir * radius).unwrap();
    let beta = gsim::fitter::beta_from_phi(&phi).unwrap();
    let z = dataset.x() * &beta;
    let basis = SplineBasis::standardized(kind, place_knots(z.as_slice(), 8).unwrap());
    let (lo, hi) = basis.knots().boundary();
    let grid: Vec<f64> = (0..80).map(|i| lo + (hi - lo) * i as f64 / 79.0).collect();
    let target = DVector::from_iterator(
        grid.len(),
        grid.iter().map(|&t| match dataset.family() {
            Family::Gaussian => t.sin(),
            Family::Binomial => 0.8 * t,
            Family::Poisson => 0.3 * t.tanh(),
            Family::Gamma => -1.5 + 0.3 * t.tanh(),
        }),
    );
    let design = basis.design(&grid, 0);
    let mut delta = design.svd(true, true).solve(&target, 1e-12).unwrap();
    let scale = 1e-3 * delta.amax().max(1.0);
    delta.iter_mut().for_each(|v| *v += scale * r.sample::<f64, _>(StandardNormal));
    (phi, delta, basis)
}

/// Adaptive Simpson quadrature of `f` on `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    recurse(f, a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, 40)
}

/// `∫ g″(z)² dz` over the basis range, integrated piece by piece between
/// breakpoints where `g″` may have kinks.
pub fn roughness_by_quadrature(basis: &SplineBasis, delta: &DVector<f64>) -> f64 {
    let g2 = |z: f64| -> f64 {
        let b = basis.eval(z, 2).unwrap();
        let v: f64 = b.iter().zip(delta.iter()).map(|(b, d)| b * d).sum();
        v * v
    };
    let breaks = basis.knots().breakpoints();
    let scale = delta.norm_squared().max(1.0);
    breaks.windows(2).map(|w| adaptive_simpson(&g2, w[0], w[1], 1e-13 * scale)).sum()
}

/// Configuration with a single smoothing parameter.
pub fn fixed_lambda(config: &FitConfig, lambda: f64) -> FitConfig {
    config.clone().with_fixed_lambda(lambda)
}
