//! A hypothesis that is not a coordinate selection: `β₁ = β₂` and
//! `β₃ + β₄ = 0`, written as `Mβ = 0` and fitted on the null space of `M`.

use std::f64::consts::PI;

use gsim::inference::{fit_alternative, fit_null, plrt, HypothesisConstraint};
use gsim::simharness::{generate, SimSetting};
use nalgebra::DMatrix;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let setting = SimSetting::gauss_sin(PI / 2.0, 100, 17);
    let data = generate(&setting, 0)?;
    let config = setting.default_fit_config();
    let d = data.d();
    // Rows of M are orthonormal.
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut m = DMatrix::zeros(2, d);
    m[(0, 0)] = h;
    m[(0, 1)] = -h;
    m[(1, 2)] = h;
    m[(1, 3)] = h;
    let constraint = HypothesisConstraint::new(m)?;
    println!("rank(M) = {}, null space of dimension {}", constraint.rank(), constraint.null_space_basis().ncols());
    let null = fit_null(&data, &config, &constraint)?;
    let alt = fit_alternative(&data, &config, &null, &[])?;
    println!("β̂ under H₀: {:?}", null.beta.iter().take(4).map(|b| format!("{b:.4}")).collect::<Vec<_>>());
    println!("‖Mβ̂₀‖ = {:.2e}", constraint.apply(&null.beta).norm());
    let test = plrt(&null, &alt, constraint.rank())?;
    println!(
        "T = {:.3}, T/φ̂ = {:.1}, p = {:.3e} (H₀ is false here: β₁ ≠ β₂ in the design)",
        test.statistic,
        test.statistic / test.dispersion_used,
        test.p_value
    );
    Ok(())
}
