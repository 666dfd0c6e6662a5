//! Dense BFGS with backtracking (Armijo) line search.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy)]
pub(crate) struct BfgsOptions {
    /// Stop when an accepted step is shorter than this.
    pub xtol: f64,
    /// Stop when the gradient sup-norm falls below this.
    pub gtol: f64,
    pub max_iter: usize,
    /// Length of the very first trial step.
    pub initial_step: f64,
    /// Step halvings before a line search gives up.
    pub max_backtracks: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct BfgsOutcome {
    pub x: DVector<f64>,
    pub value: f64,
    pub grad: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Objective at every accepted iterate, starting point included.
    pub trajectory: Vec<f64>,
}

/// Minimizes `f`, which returns the value and gradient or `None` when the
/// point is infeasible. Returns `None` only if the start itself is infeasible.
pub(crate) fn minimize<F>(mut f: F, x0: DVector<f64>, opts: BfgsOptions) -> Option<BfgsOutcome>
where
    F: FnMut(&DVector<f64>) -> Option<(f64, DVector<f64>)>,
{
    // Value and gradient come together: remember the last point so that the
    // gradient request after an accepted trial does not re-evaluate.
    let mut last: Option<(DVector<f64>, f64, DVector<f64>)> = None;
    minimize_split(
        |x: &DVector<f64>, _| {
            if let Some((lx, v, g)) = &last {
                if lx == x {
                    return Some((*v, Some(g.clone())));
                }
            }
            let (v, g) = f(x)?;
            last = Some((x.clone(), v, g.clone()));
            Some((v, Some(g)))
        },
        x0,
        opts,
    )
}

/// As [`minimize`], for objectives whose gradient is costly: `f(x, false)` may
/// return the value alone and is used for line-search trials; `f(x, true)` must
/// return the gradient and is called only at accepted points.
pub(crate) fn minimize_split<F>(mut f: F, x0: DVector<f64>, opts: BfgsOptions) -> Option<BfgsOutcome>
where
    F: FnMut(&DVector<f64>, bool) -> Option<(f64, Option<DVector<f64>>)>,
{
    let k = x0.len();
    let (mut fx, g0) = f(&x0, true)?;
    let mut g = g0?;
    let mut x = x0;
    let mut trajectory = vec![fx];
    if k == 0 {
        return Some(BfgsOutcome { x, value: fx, grad: g, iterations: 0, converged: true, trajectory });
    }
    let gnorm = g.amax();
    let mut h = DMatrix::identity(k, k) * (opts.initial_step / gnorm.max(1e-300));
    let mut first = true;
    for iter in 0..opts.max_iter {
        if g.amax() < opts.gtol {
            return Some(BfgsOutcome { x, value: fx, grad: g, iterations: iter, converged: true, trajectory });
        }
        let mut dir = -(&h * &g);
        let mut slope = dir.dot(&g);
        if slope >= 0.0 {
            // Lost descent: restart from steepest descent.
            h = DMatrix::identity(k, k) * (opts.initial_step / g.amax().max(1e-300));
            dir = -(&h * &g);
            slope = dir.dot(&g);
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..opts.max_backtracks {
            let cand = &x + &dir * t;
            if let Some((fc, _)) = f(&cand, false) {
                if fc.is_finite() && fc <= fx + 1e-4 * t * slope {
                    if let Some((fc, Some(gc))) = f(&cand, true) {
                        accepted = Some((cand, fc, gc));
                        break;
                    }
                }
            }
            t *= 0.5;
        }
        let Some((xn, fxn, gn)) = accepted else {
            return Some(BfgsOutcome { x, value: fx, grad: g, iterations: iter, converged: false, trajectory });
        };
        let s = &xn - &x;
        let yv = &gn - &g;
        let sy = s.dot(&yv);
        if sy > 1e-12 * s.norm() * yv.norm() {
            if first {
                let scale = sy / yv.norm_squared();
                h = DMatrix::identity(k, k) * scale;
                first = false;
            }
            let rho = 1.0 / sy;
            let hy = &h * &yv;
            let yhy = yv.dot(&hy);
            // H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ
            h += (&s * s.transpose()) * (rho * rho * yhy + rho)
                - (&hy * s.transpose() + &s * hy.transpose()) * rho;
        }
        let step = s.norm();
        x = xn;
        fx = fxn;
        g = gn;
        trajectory.push(fx);
        if step < opts.xtol {
            return Some(BfgsOutcome { x, value: fx, grad: g, iterations: iter + 1, converged: true, trajectory });
        }
    }
    let converged = g.amax() < opts.gtol;
    Some(BfgsOutcome { x, value: fx, grad: g, iterations: opts.max_iter, converged, trajectory })
}
