//! Invariances of the maximized likelihood: covariate order, identifiability
//! constraint, and nesting of hypotheses.

use gsim::fitter::fit_gsim;
use gsim::inference::{fit_alternative, fit_nested, fit_null, plrt, HypothesisConstraint};
use gsim::simharness::{generate, Design, SimSetting};

#[test]
fn binary_fit_is_invariant_to_covariate_order_and_constraint_set() {
    let setting = SimSetting::binary(Design::BinaryUnimodal, 250, 14).unwrap();
    let config = setting.default_fit_config();
    let data = generate(&setting, 0).unwrap();
    let fit = fit_gsim(&data, &config, &[]).unwrap();
    let permuted = data.permute_columns(&[0, 1, 3, 2]).unwrap();
    let fit_p = fit_gsim(&permuted, &config, &[]).unwrap();
    assert!((fit.loglik - fit_p.loglik).abs() <= 1e-6 * fit.loglik.abs().max(1.0));
    assert!((fit.beta[2] - fit_p.beta[3]).abs() < 1e-4);

    let set2 = fit.leading_one_form().unwrap();
    assert_eq!(set2.beta[0], 1.0);
    assert!((set2.loglik(&data).unwrap() - fit.loglik).abs() <= 1e-9 * fit.loglik.abs());
    assert!((set2.eta(&data) - fit.eta(&data)).amax() < 1e-12);

    let t = {
        let f = fit_nested(&data, &config, &HypothesisConstraint::drop(4, &[2]).unwrap()).unwrap();
        plrt(&f.null, &f.alt, 1).unwrap().statistic
    };
    let t_p = {
        let f = fit_nested(&permuted, &config, &HypothesisConstraint::drop(4, &[3]).unwrap()).unwrap();
        plrt(&f.null, &f.alt, 1).unwrap().statistic
    };
    assert!((t - t_p).abs() <= 1e-6 * t.max(1.0), "{t} vs {t_p}");
}

#[test]
fn larger_null_sets_never_fit_better() {
    let setting = SimSetting::binary(Design::BinaryMonotonic, 250, 15).unwrap();
    let data = generate(&setting, 0).unwrap();
    let base = setting.default_fit_config();
    let unrestricted = fit_gsim(&data, &base, &[]).unwrap();
    let config = base.with_fixed_lambda(unrestricted.lambda);
    let alt = fit_gsim(&data, &config, &[]).unwrap();
    let mut previous = f64::NEG_INFINITY;
    for drop in [vec![3], vec![2, 3]] {
        let null = fit_null(&data, &config, &HypothesisConstraint::drop(4, &drop).unwrap()).unwrap();
        let alt = fit_alternative(&data, &config, &null, &[&alt]).unwrap();
        let t = 2.0 * (alt.loglik - null.loglik);
        assert!(t >= previous - 1e-6, "{drop:?}: {t} < {previous}");
        previous = t;
    }
}

#[test]
fn leading_one_form_needs_a_nonzero_first_coefficient() {
    let setting = SimSetting::binary(Design::BinaryCloglog, 150, 16).unwrap();
    let data = generate(&setting, 0).unwrap();
    let fit = fit_gsim(&data, &setting.default_fit_config(), &[0]).unwrap();
    assert!(fit.leading_one_form().is_err());
}
