//! Unit-sphere parametrization of the index coefficients.
//!
//! `β(φ) = (√(1 − ‖φ‖²), φ₁, …, φ_{d−1})` maps the unit ball onto the
//! hemisphere `β₁ ≥ 0`. The optimizer works on an unconstrained `w` through
//! `φ = tanh(‖w‖)/‖w‖ · w`, which keeps every iterate strictly inside the ball.

use nalgebra::{DMatrix, DVector};

use crate::error::{GsimError, Result};

/// Fitted optima closer than this to the unit sphere are flagged.
pub const BOUNDARY_MARGIN: f64 = 1e-6;

/// `(d−1)`-vector inside the closed unit ball.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereParam(DVector<f64>);

impl SphereParam {
    pub fn new(phi: DVector<f64>) -> Result<Self> {
        let norm = phi.norm();
        if !(norm <= 1.0 + 1e-12) {
            return Err(GsimError::Domain(format!("‖φ‖ = {norm} exceeds 1")));
        }
        Ok(Self(phi))
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn near_boundary(&self) -> bool {
        self.0.norm() > 1.0 - BOUNDARY_MARGIN
    }

    /// Inverse of [`beta_from_phi`] on the open hemisphere `β₁ > 0`
    /// (any unit vector is first sign-flipped so that `β₁ ≥ 0`).
    pub fn from_beta(beta: &DVector<f64>) -> Result<Self> {
        let norm = beta.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(GsimError::Domain("zero index vector".into()));
        }
        let sign = if beta[0] < 0.0 { -1.0 } else { 1.0 };
        let tail = beta.rows(1, beta.len() - 1) * (sign / norm);
        Self::new(tail.into_owned())
    }
}

/// `β(φ)`; fails when `‖φ‖ > 1`.
pub fn beta_from_phi(phi: &SphereParam) -> Result<DVector<f64>> {
    let p = phi.as_vector();
    let sq = p.norm_squared();
    if sq > 1.0 + 1e-12 {
        return Err(GsimError::Domain(format!("‖φ‖² = {sq} exceeds 1")));
    }
    let mut beta = DVector::zeros(p.len() + 1);
    beta[0] = (1.0 - sq).max(0.0).sqrt();
    beta.rows_mut(1, p.len()).copy_from(p);
    Ok(beta)
}

/// `∂β/∂φ`, a `d × (d−1)` matrix: first row `−φᵀ/√(1−‖φ‖²)`, then the identity.
pub fn jacobian_beta_phi(phi: &SphereParam) -> Result<DMatrix<f64>> {
    let p = phi.as_vector();
    let k = p.len();
    let root = (1.0 - p.norm_squared()).sqrt();
    if !(root > 0.0) {
        return Err(GsimError::Singular("Jacobian undefined on the unit sphere".into()));
    }
    let mut j = DMatrix::zeros(k + 1, k);
    for c in 0..k {
        j[(0, c)] = -p[c] / root;
        j[(c + 1, c)] = 1.0;
    }
    Ok(j)
}

/// `φ = tanh(‖w‖)/‖w‖ · w`.
pub(crate) fn phi_from_free(w: &DVector<f64>) -> DVector<f64> {
    w * shrink(w.norm())
}

/// Inverse of [`phi_from_free`]; `φ` is first pulled inside radius `1 − 1e-9`.
pub(crate) fn free_from_phi(phi: &DVector<f64>) -> DVector<f64> {
    let r = phi.norm().min(1.0 - 1e-9);
    if r < 1e-12 {
        return phi.clone();
    }
    phi * (r.atanh() / phi.norm())
}

/// `∂φ/∂w`, symmetric.
pub(crate) fn free_jacobian(w: &DVector<f64>) -> DMatrix<f64> {
    let r = w.norm();
    let s = shrink(r);
    // (s'(r) / r): coefficient of w wᵀ.
    let c = if r < 1e-4 {
        -2.0 / 3.0 + 8.0 * r * r / 15.0
    } else {
        let sech2 = 1.0 / r.cosh().powi(2);
        (r * sech2 - r.tanh()) / (r * r * r)
    };
    let mut j = w * w.transpose() * c;
    for i in 0..w.len() {
        j[(i, i)] += s;
    }
    j
}

fn shrink(r: f64) -> f64 {
    if r < 1e-4 {
        1.0 - r * r / 3.0
    } else {
        r.tanh() / r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sp(v: &[f64]) -> SphereParam {
        SphereParam::new(DVector::from_column_slice(v)).unwrap()
    }

    #[test]
    fn beta_examples() {
        assert_eq!(beta_from_phi(&sp(&[0.0, 0.0])).unwrap().as_slice(), &[1.0, 0.0, 0.0]);
        let b = beta_from_phi(&sp(&[0.6, 0.0])).unwrap();
        assert_relative_eq!(b[0], 0.8, epsilon = 1e-15);
        assert_eq!(b[1], 0.6);
        assert_eq!(beta_from_phi(&sp(&[1.0, 0.0])).unwrap().as_slice(), &[0.0, 1.0, 0.0]);
        assert!(SphereParam::new(DVector::from_column_slice(&[0.9, 0.9])).is_err());
    }

    #[test]
    fn jacobian_examples() {
        let j = jacobian_beta_phi(&sp(&[0.0, 0.0])).unwrap();
        assert_eq!(j.row(0).iter().copied().collect::<Vec<_>>(), vec![-0.0, -0.0]);
        assert_eq!(j.rows(1, 2).into_owned(), DMatrix::identity(2, 2));
        let j = jacobian_beta_phi(&sp(&[0.6, 0.0])).unwrap();
        assert_relative_eq!(j[(0, 0)], -0.75, epsilon = 1e-14);
        assert!(matches!(
            jacobian_beta_phi(&sp(&[1.0, 0.0])),
            Err(GsimError::Singular(_))
        ));
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let k = rng.random_range(1..6);
            let mut v: DVector<f64> = DVector::from_fn(k, |_, _| rng.random_range(-1.0..1.0));
            let target: f64 = rng.random_range(0.0..0.95);
            v *= target / v.norm().max(1e-12);
            let j = jacobian_beta_phi(&SphereParam::new(v.clone()).unwrap()).unwrap();
            let h = 1e-6;
            for c in 0..k {
                let mut up = v.clone();
                up[c] += h;
                let mut dn = v.clone();
                dn[c] -= h;
                let bu = beta_from_phi(&SphereParam::new(up).unwrap()).unwrap();
                let bd = beta_from_phi(&SphereParam::new(dn).unwrap()).unwrap();
                let fd = (bu - bd) / (2.0 * h);
                for r in 0..=k {
                    assert!((fd[r] - j[(r, c)]).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn free_map_roundtrip_and_jacobian() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let k = rng.random_range(1..6);
            let w = DVector::from_fn(k, |_, _| rng.random_range(-2.0..2.0));
            let phi = phi_from_free(&w);
            assert!(phi.norm() < 1.0);
            assert!((free_from_phi(&phi) - &w).amax() < 1e-9);
            let j = free_jacobian(&w);
            let h = 1e-6;
            for c in 0..k {
                let mut up = w.clone();
                up[c] += h;
                let mut dn = w.clone();
                dn[c] -= h;
                let fd = (phi_from_free(&up) - phi_from_free(&dn)) / (2.0 * h);
                for r in 0..k {
                    assert!((fd[r] - j[(r, c)]).abs() < 1e-7);
                }
            }
        }
        let tiny = DVector::from_column_slice(&[1e-6, -2e-6]);
        let j = free_jacobian(&tiny);
        assert_relative_eq!(j[(0, 0)], 1.0, epsilon = 1e-10);
    }

    #[test]
    fn from_beta_flips_sign() {
        let b = DVector::from_column_slice(&[-0.8, 0.6, 0.0]);
        let phi = SphereParam::from_beta(&b).unwrap();
        assert_eq!(phi.as_vector().as_slice(), &[-0.6, -0.0]);
    }
}
