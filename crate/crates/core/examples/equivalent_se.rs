//! Equivalent standard errors: each `β̂_j` is set to zero, the likelihood
//! ratio `T_j` computed, and `√φ̂|β̂_j|/√T_j` reported next to the Wald SE.

use std::f64::consts::PI;

use gsim::fitter::fit_gsim;
use gsim::inference::{equivalent_se, wald_covariance};
use gsim::simharness::{generate, SimSetting};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let setting = SimSetting::gauss_sin(PI / 2.0, 100, 8);
    let data = generate(&setting, 0)?;
    let config = setting.default_fit_config();
    let fit = fit_gsim(&data, &config, &[])?;
    let wald = wald_covariance(&data, &fit)?.beta_se(data.d());
    println!("coef      β̂        T_j      se_eq    se_wald");
    for j in 0..4 {
        let eq = equivalent_se(&data, &config, &fit, j)?;
        let se = eq.se.map_or("n/a".to_string(), |s| format!("{s:.4}"));
        println!("β{:<3} {:9.4} {:10.2} {:>10} {:10.4}", j + 1, eq.beta, eq.statistic, se, wald[j]);
    }
    Ok(())
}
