//! Builds a standardized cubic spline basis at index quantiles and checks the
//! roughness penalty `δᵀDδ` against trapezoidal quadrature of `∫ g″(z)² dz`.

use gsim::splines::{place_knots, BasisKind, SplineBasis};
use nalgebra::DVector;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let index: Vec<f64> = (0..200).map(|i| (i as f64 / 20.0).sin() * 2.0 + i as f64 / 100.0).collect();
    let knots = place_knots(&index, 10)?;
    println!("interior knots: {:?}", knots.interior().iter().map(|k| format!("{k:.3}")).collect::<Vec<_>>());
    for kind in [BasisKind::TruncatedCubic, BasisKind::CubicRegression] {
        let basis = SplineBasis::standardized(kind, knots.clone());
        let penalty = basis.penalty_matrix();
        let delta = DVector::from_fn(basis.dim(), |j, _| ((j * 7 + 3) % 5) as f64 - 2.0);
        let (lo, hi) = basis.knots().boundary();
        let steps = 20_000;
        let h = (hi - lo) / steps as f64;
        let mut integral = 0.0;
        for s in 0..=steps {
            let z = lo + h * s as f64;
            let g2: f64 = basis.eval(z, 2)?.iter().zip(delta.iter()).map(|(b, d)| b * d).sum();
            let w = if s == 0 || s == steps { 0.5 } else { 1.0 };
            integral += w * h * g2 * g2;
        }
        // Linear functions of the index lie in the span and are unpenalized.
        let grid: Vec<f64> = (0..100).map(|i| lo + (hi - lo) * i as f64 / 99.0).collect();
        let design = basis.design(&grid, 0);
        let line = DVector::from_iterator(grid.len(), grid.iter().map(|z| 1.0 + 0.5 * z));
        let coef = design.svd(true, true).solve(&line, 1e-12)?;
        println!(
            "{kind:?}: dim {}  δᵀDδ = {:.6}  quadrature = {:.6}  penalty of 1 + z/2 = {:.2e}",
            basis.dim(),
            penalty.quadratic_form(&delta),
            integral,
            penalty.quadratic_form(&coef).abs()
        );
    }
    Ok(())
}
