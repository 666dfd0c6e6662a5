//! A short Monte Carlo Type-1 error study with Clopper–Pearson intervals.
//! `cargo run --release --example type1_study -- 100` for more replicates.

use std::f64::consts::PI;

use gsim::simharness::{run_study, SimSetting, StudyConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let reps: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(20);
    let setting = SimSetting::gauss_sin(PI / 2.0, 100, 20240611);
    let mut cfg = StudyConfig::new(setting, reps);
    cfg.drop_sets = vec![StudyConfig::tail_drop(10, 1), StudyConfig::tail_drop(10, 7)];
    cfg.se_coefficients = vec![0, 1];
    cfg.workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let report = run_study(&cfg)?;
    println!("{}", report.rejection_rule);
    for cell in &report.cells {
        println!(
            "drop {:?} α = {:.2} {:<6} {:>3}/{:<3} = {:.3}  [{:.3}, {:.3}]",
            cell.drop_set, cell.level, cell.method.name(), cell.rejections, cell.used, cell.rate, cell.ci_lower, cell.ci_upper
        );
    }
    for c in &report.coefficients {
        println!("β{}: mean {:.4} sd {:.4} Wald {:?} eq {:?}", c.coefficient, c.mean_beta, c.sd_beta, c.mean_wald_se, c.mean_equivalent_se);
    }
    Ok(())
}
