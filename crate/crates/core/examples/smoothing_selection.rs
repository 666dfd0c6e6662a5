//! Selects the smoothing parameter for a fixed index direction and prints
//! the criterion along the λ grid, marking the chosen point.

use std::f64::consts::PI;

use gsim::fitter::select_lambda_gcv;
use gsim::simharness::{generate, Design, SimSetting};
use gsim::splines::{place_knots, SplineBasis};
use nalgebra::DVector;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for setting in [
        SimSetting::gauss_sin(PI / 2.0, 100, 11),
        SimSetting::binary(Design::BinaryUnimodal, 350, 11)?,
    ] {
        let data = generate(&setting, 0)?;
        let config = setting.default_fit_config();
        let beta = DVector::from_vec(setting.beta_true.clone());
        let z = data.x() * &beta;
        let basis = SplineBasis::standardized(config.basis_kind, place_knots(z.as_slice(), config.n_knots)?);
        let choice = select_lambda_gcv(&data, &beta, &basis, &config)?;
        println!("{} at the true index: λ = {:.3e}, edf(g) = {:.2}", setting.design.name(), choice.lambda, choice.edf_smooth);
        for (lambda, score) in config.lambda_grid.iter().zip(&choice.scores).step_by(4) {
            let mark = if *lambda == choice.lambda { " <" } else { "" };
            println!("  λ = {lambda:9.2e}  score = {score:.5}{mark}");
        }
    }
    Ok(())
}
