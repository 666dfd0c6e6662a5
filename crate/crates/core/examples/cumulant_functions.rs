//! The exponential-family pieces behind every fit: cumulant `b(η)`, mean
//! `b′(η)`, variance `b″(η)`, and a finite-difference check that they agree.

use gsim::expfam::Family;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let h = 1e-5;
    for family in [Family::Gaussian, Family::Binomial, Family::Poisson, Family::Gamma] {
        println!("{family:?} (dispersion {:?})", family.dispersion_policy());
        // Gamma's canonical parameter lives on η < 0.
        let etas: &[f64] = if family == Family::Gamma { &[-3.0, -1.0, -0.2] } else { &[-2.0, 0.0, 1.5] };
        for &eta in etas {
            let b = family.cumulant(eta)?;
            let mu = family.mean(eta)?;
            let v = family.variance_unscaled(eta)?;
            let mu_fd = (family.cumulant(eta + h)? - family.cumulant(eta - h)?) / (2.0 * h);
            let v_fd = (family.mean(eta + h)? - family.mean(eta - h)?) / (2.0 * h);
            println!(
                "  η = {eta:5.2}  b = {b:9.5}  μ = {mu:8.5} (fd {mu_fd:8.5})  V = {v:8.5} (fd {v_fd:8.5})  link(μ) = {:6.3}",
                family.canonical_link(mu)
            );
        }
    }
    Ok(())
}
