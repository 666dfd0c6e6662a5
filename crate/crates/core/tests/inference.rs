//! Properties of the likelihood ratio, equivalent-SE and Wald machinery on
//! fitted models.

use std::f64::consts::PI;

use gsim::fitter::fit_gsim;
use gsim::inference::{
    equivalent_se, equivalent_se_from_statistic, fit_alternative, fit_nested, fit_null, plrt,
    plrt_f_adjusted, wald_covariance, wald_test, HypothesisConstraint, Reference,
};
use gsim::simharness::{generate, Design, SimSetting};
use nalgebra::DMatrix;

#[test]
fn plrt_is_nonnegative_with_valid_p_values() {
    let setting = SimSetting::binary(Design::BinaryCloglog, 200, 4).unwrap();
    let config = setting.default_fit_config();
    for rep in 0..3 {
        let data = generate(&setting, rep).unwrap();
        let c = HypothesisConstraint::drop_last(4, 2).unwrap();
        let fits = fit_nested(&data, &config, &c).unwrap();
        assert_eq!(fits.alt.lambda, fits.null.lambda);
        assert!(fits.alt.loglik >= fits.null.loglik);
        let t = plrt(&fits.null, &fits.alt, 2).unwrap();
        let f = plrt_f_adjusted(&fits.null, &fits.alt, 2, data.n()).unwrap();
        assert_eq!(t.reference, Reference::ChiSquaredScaled);
        assert_eq!(f.reference, Reference::FScaled);
        assert_eq!(t.dispersion_used, 1.0);
        assert!(t.statistic >= 0.0 && (0.0..=1.0).contains(&t.p_value));
        assert!((0.0..=1.0).contains(&f.p_value));
        assert!(f.denom_df.unwrap() < data.n() as f64);
        assert!(fits.null.beta[2] == 0.0 && fits.null.beta[3] == 0.0);
        assert!((fits.null.beta.norm() - 1.0).abs() < 1e-12 && fits.null.beta[0] > 0.0);
    }
}

#[test]
fn mismatched_fits_are_rejected() {
    let setting = SimSetting::binary(Design::BinaryCloglog, 150, 5).unwrap();
    let config = setting.default_fit_config();
    let a = generate(&setting, 0).unwrap();
    let b = generate(&setting, 1).unwrap();
    let fa = fit_gsim(&a, &config, &[3]).unwrap();
    let fb = fit_gsim(&b, &config, &[]).unwrap();
    assert!(plrt(&fa, &fb, 1).is_err());
    assert!(fit_alternative(&b, &config, &fa, &[]).is_err());
}

#[test]
fn general_constraint_fit_lies_in_the_null_space() {
    let setting = SimSetting::gauss_sin(PI / 2.0, 100, 6);
    let data = generate(&setting, 0).unwrap();
    let config = setting.default_fit_config();
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut m = DMatrix::zeros(1, 10);
    m[(0, 2)] = h;
    m[(0, 3)] = -h;
    let c = HypothesisConstraint::new(m).unwrap();
    let null = fit_null(&data, &config, &c).unwrap();
    assert!(c.apply(&null.beta).amax() < 1e-10);
    assert!((null.beta.norm() - 1.0).abs() < 1e-10);
    let alt = fit_alternative(&data, &config, &null, &[]).unwrap();
    let t = plrt(&null, &alt, 1).unwrap();
    // β₃ = β₄ = 0 holds in the design, so the constraint is true.
    assert!(t.p_value > 1e-3, "p = {}", t.p_value);
}

#[test]
fn equivalent_se_conventions() {
    assert_eq!(equivalent_se_from_statistic(1.0, 0.0, 3.0), None);
    assert_eq!(equivalent_se_from_statistic(1.0, 0.5, 0.0), Some(f64::INFINITY));
    let se = equivalent_se_from_statistic(4.0, -0.3, 9.0).unwrap();
    assert!((se - 2.0 * 0.3 / 3.0).abs() < 1e-15);
}

#[test]
fn equivalent_and_wald_se_are_finite_and_positive() {
    let setting = SimSetting::gauss_sin(PI / 2.0, 100, 9);
    let data = generate(&setting, 0).unwrap();
    let config = setting.default_fit_config();
    let fit = fit_gsim(&data, &config, &[]).unwrap();
    let cov = wald_covariance(&data, &fit).unwrap();
    let se = cov.beta_se(10);
    assert!(se.iter().all(|s| s.is_finite() && *s > 0.0));
    let block = cov.beta_block(10);
    assert!((&block - block.transpose()).amax() < 1e-12);
    // The covariance of β̂ is orthogonal to the sphere's normal β̂.
    assert!((&block * &fit.beta).amax() < 1e-8 * block.amax());
    let eq = equivalent_se(&data, &config, &fit, 1).unwrap();
    assert!(eq.statistic > 0.0);
    let s = eq.se.unwrap();
    assert!(s.is_finite() && s > 0.0);
    assert!((s - eq.dispersion.sqrt() * eq.beta.abs() / eq.statistic.sqrt()).abs() < 1e-14);
}

#[test]
fn wald_test_of_a_true_and_a_false_hypothesis() {
    let setting = SimSetting::gauss_sin(PI / 2.0, 100, 12);
    let data = generate(&setting, 0).unwrap();
    let fit = fit_gsim(&data, &setting.default_fit_config(), &[]).unwrap();
    let cov = wald_covariance(&data, &fit).unwrap();
    let false_h = wald_test(&fit, &cov, &HypothesisConstraint::drop(10, &[1]).unwrap()).unwrap();
    assert_eq!(false_h.reference, Reference::WaldChiSquared);
    assert!(false_h.p_value < 1e-6);
    let true_h = wald_test(&fit, &cov, &HypothesisConstraint::drop_last(10, 3).unwrap()).unwrap();
    assert!(true_h.statistic >= 0.0 && true_h.p_value > 0.0);
}
