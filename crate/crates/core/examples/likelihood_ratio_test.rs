//! Tests that the last coefficients of the index are zero with the penalized
//! likelihood ratio (χ² and F references) and the plug-in Wald test.

use std::f64::consts::PI;

use gsim::inference::{fit_nested, plrt, plrt_f_adjusted, wald_covariance, wald_test, HypothesisConstraint};
use gsim::simharness::{generate, Design, SimSetting};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cases = [
        (SimSetting::gauss_sin(PI / 2.0, 100, 3), 7),
        (SimSetting::binary(Design::BinaryCloglog, 350, 3)?, 2),
    ];
    for (setting, count) in cases {
        let data = generate(&setting, 0)?;
        let config = setting.default_fit_config();
        let constraint = HypothesisConstraint::drop_last(data.d(), count)?;
        let fits = fit_nested(&data, &config, &constraint)?;
        let r = constraint.rank();
        let lr = plrt(&fits.null, &fits.alt, r)?;
        let lr_f = plrt_f_adjusted(&fits.null, &fits.alt, r, data.n())?;
        let wald = wald_test(&fits.unrestricted, &wald_covariance(&data, &fits.unrestricted)?, &constraint)?;
        println!("{}: H₀ drops the last {count} of {} coefficients (true under the design)", setting.design.name(), data.d());
        println!("  λ under H₀ = {:.2e}, unrestricted λ = {:.2e}", fits.null.lambda, fits.unrestricted.lambda);
        println!("  PLRT  T = {:8.3}  p = {:.4}", lr.statistic, lr.p_value);
        match lr_f.denom_df {
            Some(m) => println!("  PLRT-F (r = {r}, m = {m:.1})  p = {:.4}", lr_f.p_value),
            None => println!("  PLRT-F p = {:.4}", lr_f.p_value),
        }
        println!("  Wald  W = {:8.3}  p = {:.4}", wald.statistic, wald.p_value);
    }
    Ok(())
}
