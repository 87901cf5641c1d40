//! How far SGLD and SGWORLD sit from the exact Bayesian posterior, as a
//! function of the learning rate.
//!
//! cargo run --release --example posterior_samplers

use sgdthermo::models::{gen_regression_dataset, ModelSpec};
use sgdthermo::stationary::{find_minimum, kl_vs_eta, log_log_slope, Landscape};

fn main() -> sgdthermo::Result<()> {
    let data = gen_regression_dataset(200, 0.1, 1)?;
    let model = ModelSpec::linearized_regression(0.1, 10.0);
    let t0 = find_minimum(&model, &data, &[0.0; 3], Landscape::Plain)?;
    let etas: Vec<f64> = (0..5).map(|k| 1e-7 * 10f64.powf(k as f64 / 2.0)).collect();
    let rows = kl_vs_eta(&model, &data, t0.as_slice(), &etas, 10)?;
    println!("{:>10} {:>12} {:>12} {:>14}", "eta", "SGLD", "SGWORLD", "uncorrected");
    for r in &rows {
        println!("{:>10.2e} {:>12.3e} {:>12.3e} {:>14.3e}", r.eta, r.kl_sgld, r.kl_sgworld, r.kl_sgworld_uncorrected);
    }
    let kl = |f: fn(&sgdthermo::stationary::KlRow) -> f64| rows.iter().map(f).collect::<Vec<_>>();
    println!("log-log slopes: SGLD {:.2}, SGWORLD {:.2}", log_log_slope(&etas, &kl(|r| r.kl_sgld)), log_log_slope(&etas, &kl(|r| r.kl_sgworld)));
    Ok(())
}
