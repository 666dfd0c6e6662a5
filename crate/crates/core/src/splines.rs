//! Regression-spline bases for the link function `g`, and the curvature
//! penalty `δᵀDδ = ∫ g″(z)² dz`.
//!
//! Two bases are available:
//!
//! * [`BasisKind::TruncatedCubic`]: `1, u, u², u³, (u − κ_j)₊³` where `u` is the
//!   index after an optional affine standardization `u = (z − c)/s`. The span does
//!   not depend on `(c, s)`; standardizing only improves conditioning.
//! * [`BasisKind::CubicRegression`]: a natural cubic spline parametrized by its
//!   values at the knots (boundary knots included), linear beyond the boundary.
//!
//! In both cases `B″` is piecewise linear between consecutive knots, so the
//! penalty integrand is piecewise quadratic and two-point Gauss–Legendre per
//! piece integrates it exactly.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::str::FromStr;

use crate::error::{GsimError, Result};

/// Interior knots plus the boundary interval `[lo, hi]` that strictly encloses them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnotSequence {
    interior: Vec<f64>,
    lo: f64,
    hi: f64,
}

impl KnotSequence {
    pub fn new(interior: Vec<f64>, lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(GsimError::Data(format!("invalid boundary [{lo}, {hi}]")));
        }
        if interior.iter().any(|k| !k.is_finite()) {
            return Err(GsimError::Data("non-finite knot".into()));
        }
        if interior.windows(2).any(|w| w[0] >= w[1]) {
            return Err(GsimError::Data("interior knots must be strictly increasing".into()));
        }
        if let (Some(&first), Some(&last)) = (interior.first(), interior.last()) {
            if first <= lo || last >= hi {
                return Err(GsimError::Data(
                    "boundary must strictly enclose the interior knots".into(),
                ));
            }
        }
        Ok(Self { interior, lo, hi })
    }

    pub fn interior(&self) -> &[f64] {
        &self.interior
    }

    pub fn boundary(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    /// `lo, κ_1, …, κ_m, hi`.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.interior.len() + 2);
        v.push(self.lo);
        v.extend_from_slice(&self.interior);
        v.push(self.hi);
        v
    }
}

/// Type-7 (linear interpolation) empirical quantile of sorted data.
pub(crate) fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Places `n_knots` interior knots at the `j/(n_knots+1)` empirical quantiles of
/// the index values, with the boundary at the data range padded by `1e-6·range`.
pub fn place_knots(index_values: &[f64], n_knots: usize) -> Result<KnotSequence> {
    if n_knots == 0 {
        return Err(GsimError::Usage("at least one interior knot is required".into()));
    }
    if index_values.iter().any(|v| !v.is_finite()) {
        return Err(GsimError::Data("non-finite index value".into()));
    }
    let mut sorted = index_values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let distinct = 1 + sorted.windows(2).filter(|w| w[1] > w[0]).count();
    if sorted.is_empty() || distinct < n_knots + 2 {
        return Err(GsimError::Data(format!(
            "knot placement needs at least {} distinct index values, found {}",
            n_knots + 2,
            if sorted.is_empty() { 0 } else { distinct }
        )));
    }
    let (min, max) = (sorted[0], sorted[sorted.len() - 1]);
    let range = max - min;
    let mut interior: Vec<f64> = (1..=n_knots)
        .map(|j| quantile_sorted(&sorted, j as f64 / (n_knots + 1) as f64))
        .collect();
    let nudge = 1e-8 * range;
    for j in 1..interior.len() {
        if interior[j] <= interior[j - 1] {
            interior[j] = interior[j - 1] + nudge;
        }
    }
    let lo = min - 1e-6 * range;
    let hi = max + 1e-6 * range;
    KnotSequence::new(interior, lo, hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    #[default]
    TruncatedCubic,
    CubicRegression,
}

impl FromStr for BasisKind {
    type Err = GsimError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "truncated_cubic" | "tp" | "truncated" => Ok(BasisKind::TruncatedCubic),
            "cubic_regression" | "cr" => Ok(BasisKind::CubicRegression),
            other => Err(GsimError::Usage(format!("unknown basis kind `{other}`"))),
        }
    }
}

/// A spline basis on a fixed knot sequence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplineBasis {
    kind: BasisKind,
    knots: KnotSequence,
    center: f64,
    scale: f64,
    /// Natural-spline map from knot values to knot second derivatives
    /// (cubic regression only; row-major `k × k`).
    #[serde(skip)]
    second_deriv_map: Option<DMatrix<f64>>,
}

impl SplineBasis {
    /// Basis on the raw index scale (`c = 0, s = 1`).
    pub fn new(kind: BasisKind, knots: KnotSequence) -> Self {
        Self::with_affine(kind, knots, 0.0, 1.0)
    }

    /// Basis on the index standardized to `[-1, 1]` over the boundary interval.
    pub fn standardized(kind: BasisKind, knots: KnotSequence) -> Self {
        let (lo, hi) = knots.boundary();
        Self::with_affine(kind, knots, 0.5 * (lo + hi), 0.5 * (hi - lo))
    }

    fn with_affine(kind: BasisKind, knots: KnotSequence, center: f64, scale: f64) -> Self {
        let second_deriv_map = match kind {
            BasisKind::CubicRegression => Some(natural_spline_map(&knots.breakpoints())),
            BasisKind::TruncatedCubic => None,
        };
        Self {
            kind,
            knots,
            center,
            scale,
            second_deriv_map,
        }
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn knots(&self) -> &KnotSequence {
        &self.knots
    }

    pub fn dim(&self) -> usize {
        match self.kind {
            BasisKind::TruncatedCubic => self.knots.interior.len() + 4,
            BasisKind::CubicRegression => self.knots.interior.len() + 2,
        }
    }

    /// Evaluates `B(z)`, `B′(z)` or `B″(z)` (derivatives with respect to `z`).
    pub fn eval(&self, z: f64, deriv: usize) -> Result<Vec<f64>> {
        if deriv > 2 {
            return Err(GsimError::Usage(format!("derivative order {deriv} not supported")));
        }
        let mut out = vec![0.0; self.dim()];
        self.eval_into(z, deriv, &mut out);
        Ok(out)
    }

    /// Writes the basis row into `out` (length `dim`). `deriv` must be 0, 1 or 2.
    pub fn eval_into(&self, z: f64, deriv: usize, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim());
        match self.kind {
            BasisKind::TruncatedCubic => self.eval_truncated(z, deriv, out),
            BasisKind::CubicRegression => self.eval_cr(z, deriv, out),
        }
    }

    fn eval_truncated(&self, z: f64, deriv: usize, out: &mut [f64]) {
        let s = self.scale;
        let u = (z - self.center) / s;
        match deriv {
            0 => {
                out[0] = 1.0;
                out[1] = u;
                out[2] = u * u;
                out[3] = u * u * u;
            }
            1 => {
                out[0] = 0.0;
                out[1] = 1.0 / s;
                out[2] = 2.0 * u / s;
                out[3] = 3.0 * u * u / s;
            }
            _ => {
                out[0] = 0.0;
                out[1] = 0.0;
                out[2] = 2.0 / (s * s);
                out[3] = 6.0 * u / (s * s);
            }
        }
        for (o, &k) in out[4..].iter_mut().zip(&self.knots.interior) {
            let t = ((z - k) / s).max(0.0);
            *o = match deriv {
                0 => t * t * t,
                1 => 3.0 * t * t / s,
                _ => 6.0 * t / (s * s),
            };
        }
    }

    fn eval_cr(&self, z: f64, deriv: usize, out: &mut [f64]) {
        let f = self.second_deriv_map.as_ref().expect("cr basis carries its map");
        let x = self.knots.breakpoints();
        let k = x.len();
        out.iter_mut().for_each(|o| *o = 0.0);
        // Linear extrapolation beyond the boundary knots.
        if z < x[0] || z > x[k - 1] {
            let (edge, j) = if z < x[0] { (x[0], 0) } else { (x[k - 1], k - 2) };
            if deriv == 2 {
                return;
            }
            let mut val = vec![0.0; k];
            let mut slope = vec![0.0; k];
            cr_segment(&x, f, j, edge, 0, &mut val);
            cr_segment(&x, f, j, edge, 1, &mut slope);
            for l in 0..k {
                out[l] = if deriv == 0 { val[l] + slope[l] * (z - edge) } else { slope[l] };
            }
            return;
        }
        let j = match x[1..k - 1].iter().position(|&kn| z < kn) {
            Some(p) => p,
            None => k - 2,
        };
        cr_segment(&x, f, j, z, deriv, out);
    }

    /// `n × dim` matrix whose rows are `B^{(deriv)}(z_i)`.
    pub fn design(&self, z: &[f64], deriv: usize) -> DMatrix<f64> {
        let p = self.dim();
        let mut m = DMatrix::zeros(z.len(), p);
        let mut row = vec![0.0; p];
        for (i, &zi) in z.iter().enumerate() {
            self.eval_into(zi, deriv, &mut row);
            for (j, &v) in row.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// `D_jk = ∫_lo^hi B″_j(z) B″_k(z) dz`, exact by piecewise Gauss–Legendre.
    pub fn penalty_matrix(&self) -> PenaltyMatrix {
        let p = self.dim();
        let mut d = DMatrix::zeros(p, p);
        let nodes = [-1.0 / 3f64.sqrt(), 1.0 / 3f64.sqrt()];
        let mut row = vec![0.0; p];
        for w in self.knots.breakpoints().windows(2) {
            let (a, b) = (w[0], w[1]);
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for &t in &nodes {
                self.eval_into(mid + half * t, 2, &mut row);
                for j in 0..p {
                    if row[j] == 0.0 {
                        continue;
                    }
                    for k in 0..p {
                        d[(j, k)] += half * row[j] * row[k];
                    }
                }
            }
        }
        d = 0.5 * (&d + d.transpose());
        PenaltyMatrix(d)
    }
}

/// Basis values on segment `j` (between `x[j]` and `x[j+1]`) for the natural
/// cubic spline parametrized by knot values.
fn cr_segment(x: &[f64], f: &DMatrix<f64>, j: usize, z: f64, deriv: usize, out: &mut [f64]) {
    let h = x[j + 1] - x[j];
    let (l, r) = (x[j + 1] - z, z - x[j]);
    let (am, ap, cm, cp) = match deriv {
        0 => (
            l / h,
            r / h,
            (l * l * l / h - h * l) / 6.0,
            (r * r * r / h - h * r) / 6.0,
        ),
        1 => (
            -1.0 / h,
            1.0 / h,
            (-3.0 * l * l / h + h) / 6.0,
            (3.0 * r * r / h - h) / 6.0,
        ),
        _ => (0.0, 0.0, l / h, r / h),
    };
    for (c, o) in out.iter_mut().enumerate() {
        *o = cm * f[(j, c)] + cp * f[(j + 1, c)];
    }
    out[j] += am;
    out[j + 1] += ap;
}

/// Matrix `F` with `γ = F·β` mapping knot values to knot second derivatives of
/// the interpolating natural cubic spline (first and last rows zero).
fn natural_spline_map(x: &[f64]) -> DMatrix<f64> {
    let k = x.len();
    let mut f = DMatrix::zeros(k, k);
    if k < 3 {
        return f;
    }
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let m = k - 2;
    let mut bmat = DMatrix::zeros(m, m);
    let mut dmat = DMatrix::zeros(m, k);
    for i in 0..m {
        dmat[(i, i)] = 1.0 / h[i];
        dmat[(i, i + 1)] = -1.0 / h[i] - 1.0 / h[i + 1];
        dmat[(i, i + 2)] = 1.0 / h[i + 1];
        bmat[(i, i)] = (h[i] + h[i + 1]) / 3.0;
        if i + 1 < m {
            bmat[(i, i + 1)] = h[i + 1] / 6.0;
            bmat[(i + 1, i)] = h[i + 1] / 6.0;
        }
    }
    let inner = bmat
        .cholesky()
        .expect("tridiagonal natural-spline system is positive definite")
        .solve(&dmat);
    f.view_mut((1, 0), (m, k)).copy_from(&inner);
    f
}

/// Symmetric positive semi-definite curvature penalty.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyMatrix(pub DMatrix<f64>);

impl PenaltyMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    /// `δᵀDδ`.
    pub fn quadratic_form(&self, delta: &DVector<f64>) -> f64 {
        delta.dot(&(&self.0 * delta))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn one_knot(k: f64) -> SplineBasis {
        SplineBasis::new(
            BasisKind::TruncatedCubic,
            KnotSequence::new(vec![k], -1.0, 3.0).unwrap(),
        )
    }

    #[test]
    fn knots_at_median_of_grid() {
        let v: Vec<f64> = (0..=100).map(f64::from).collect();
        let ks = place_knots(&v, 1).unwrap();
        assert_relative_eq!(ks.interior()[0], 50.0, epsilon = 1e-12);
        let (lo, hi) = ks.boundary();
        assert_relative_eq!(lo, -1e-4, epsilon = 1e-12);
        assert_relative_eq!(hi, 100.0 + 1e-4, epsilon = 1e-12);
    }

    #[test]
    fn constant_values_rejected() {
        assert!(matches!(place_knots(&[0.0; 50], 3), Err(GsimError::Data(_))));
        assert!(matches!(place_knots(&[0.0, 1.0, 2.0], 3), Err(GsimError::Data(_))));
    }

    #[test]
    fn normal_sample_quartile_knots() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let v: Vec<f64> = (0..1000).map(|_| rng.sample(StandardNormal)).collect();
        let ks = place_knots(&v, 3).unwrap();
        // Independent oracle: nearest-rank quantiles of the sorted sample.
        let mut s = v.clone();
        s.sort_by(f64::total_cmp);
        for (j, (&k, truth)) in ks.interior().iter().zip([-0.674, 0.0, 0.674]).enumerate() {
            let oracle = s[((j + 1) * 1000) / 4];
            assert!((k - oracle).abs() < 0.01);
            assert!((k - truth).abs() < 0.1);
        }
    }

    #[test]
    fn tied_quantiles_are_nudged_apart() {
        let mut v = vec![1.0; 60];
        v.extend((0..20).map(|i| i as f64 * 0.1));
        let ks = place_knots(&v, 5).unwrap();
        assert!(ks.interior().windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn truncated_eval_examples() {
        let b = one_knot(1.0);
        assert_eq!(b.eval(0.5, 0).unwrap(), vec![1.0, 0.5, 0.25, 0.125, 0.0]);
        assert_eq!(b.eval(2.0, 2).unwrap()[4], 6.0);
        assert_eq!(b.eval(2.0, 1).unwrap()[4], 3.0);
        assert!(b.eval(0.0, 3).is_err());
    }

    #[test]
    fn quadratic_penalty_on_unit_interval() {
        let b = SplineBasis::new(BasisKind::TruncatedCubic, KnotSequence::new(vec![], 0.0, 1.0).unwrap());
        let d = b.penalty_matrix();
        let delta = DVector::from_vec(vec![0.0, 0.0, 1.0, 0.0]);
        assert_relative_eq!(d.quadratic_form(&delta), 4.0, epsilon = 1e-12);
        let lin = DVector::from_vec(vec![3.0, 2.0, 0.0, 0.0]);
        assert_eq!(d.quadratic_form(&lin), 0.0);
    }

    fn bases() -> Vec<SplineBasis> {
        let ks = KnotSequence::new(vec![-0.6, 0.1, 0.4, 1.3], -1.0, 2.0).unwrap();
        vec![
            SplineBasis::new(BasisKind::TruncatedCubic, ks.clone()),
            SplineBasis::standardized(BasisKind::TruncatedCubic, ks.clone()),
            SplineBasis::new(BasisKind::CubicRegression, ks),
        ]
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for b in bases() {
            for _ in 0..50 {
                let z: f64 = rng.random_range(-1.5..2.5);
                let h = 1e-6;
                for deriv in 0..2 {
                    let hi = b.eval(z + h, deriv).unwrap();
                    let lo = b.eval(z - h, deriv).unwrap();
                    let an = b.eval(z, deriv + 1).unwrap();
                    for j in 0..b.dim() {
                        let fd = (hi[j] - lo[j]) / (2.0 * h);
                        assert!(
                            (fd - an[j]).abs() <= 1e-6 * an[j].abs().max(1.0),
                            "{:?} deriv {deriv} j {j} z {z}: {fd} vs {}",
                            b.kind(),
                            an[j]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn cr_interpolates_knot_values() {
        let ks = KnotSequence::new(vec![0.2, 0.5, 0.9], 0.0, 1.0).unwrap();
        let b = SplineBasis::new(BasisKind::CubicRegression, ks.clone());
        for (i, &x) in ks.breakpoints().iter().enumerate() {
            let row = b.eval(x, 0).unwrap();
            for (j, &v) in row.iter().enumerate() {
                assert_relative_eq!(v, if i == j { 1.0 } else { 0.0 }, epsilon = 1e-12);
            }
        }
        // Natural: zero curvature at both ends.
        assert!(b.eval(0.0, 2).unwrap().iter().all(|v| v.abs() < 1e-12));
        assert!(b.eval(1.0, 2).unwrap().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn penalty_null_space_is_linear() {
        for b in bases() {
            let d = b.penalty_matrix();
            let p = b.dim();
            let (lo, hi) = b.knots().boundary();
            // Coordinates of the constant and identity functions via interpolation.
            let pts: Vec<f64> = (0..p).map(|i| lo + (hi - lo) * (i as f64 + 0.5) / p as f64).collect();
            let bm = b.design(&pts, 0);
            let lu = bm.clone().lu();
            for target in [|_: f64| 1.0, |z: f64| z] {
                let rhs = DVector::from_iterator(p, pts.iter().map(|&z| target(z)));
                let v = lu.solve(&rhs).unwrap();
                let dv = d.matrix() * &v;
                assert!(dv.amax() < 1e-8 * d.matrix().amax().max(1.0), "{:?}", b.kind());
            }
            let eig = d.matrix().clone().symmetric_eigen();
            let tol = 1e-10 * eig.eigenvalues.amax();
            assert!(eig.eigenvalues.iter().all(|&e| e > -tol));
            let rank = eig.eigenvalues.iter().filter(|&&e| e > tol).count();
            assert_eq!(rank, p - 2, "{:?}", b.kind());
        }
    }

    #[test]
    fn truncated_basis_reproduces_cubics() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for b in bases().into_iter().take(2) {
            let c: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
            let poly = |z: f64| c[0] + c[1] * z + c[2] * z * z + c[3] * z * z * z;
            let (lo, hi) = b.knots().boundary();
            let p = b.dim();
            let pts: Vec<f64> = (0..p).map(|i| lo + (hi - lo) * (i as f64 + 0.3) / p as f64).collect();
            let rhs = DVector::from_iterator(p, pts.iter().map(|&z| poly(z)));
            let delta = b.design(&pts, 0).lu().solve(&rhs).unwrap();
            for i in 0..=200 {
                let z = lo + (hi - lo) * i as f64 / 200.0;
                let g: f64 = b.eval(z, 0).unwrap().iter().zip(delta.iter()).map(|(a, b)| a * b).sum();
                assert!((g - poly(z)).abs() < 1e-9, "{} vs {}", g, poly(z));
            }
        }
    }
}
