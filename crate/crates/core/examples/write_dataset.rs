//! Writes one replicate of a simulation design as CSV, ready for the `gsim`
//! command line: `cargo run --example write_dataset -- binary_cloglog 350 7 data.csv`.

use std::f64::consts::PI;

use gsim::simharness::{generate, Design, SimSetting};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let design = args.first().map(String::as_str).unwrap_or("gauss_sin");
    let n: usize = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(100);
    let seed: u64 = args.get(2).map(|s| s.parse()).transpose()?.unwrap_or(1);
    let setting = match design {
        "gauss_sin" => SimSetting::gauss_sin(PI / 2.0, n, seed),
        "binary_cloglog" => SimSetting::binary(Design::BinaryCloglog, n, seed)?,
        "binary_unimodal" => SimSetting::binary(Design::BinaryUnimodal, n, seed)?,
        "binary_monotonic" => SimSetting::binary(Design::BinaryMonotonic, n, seed)?,
        other => return Err(format!("unknown design `{other}`").into()),
    };
    let data = generate(&setting, 0)?;
    match args.get(3) {
        Some(path) => {
            data.write_csv(std::fs::File::create(path)?)?;
            eprintln!("wrote {} rows × {} covariates to {path}", data.n(), data.d());
        }
        None => data.write_csv(std::io::stdout())?,
    }
    Ok(())
}
