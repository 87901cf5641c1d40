//! Linearized stationary state of SGD with replacement: covariance,
//! circulation, entropy production rate, and the (η, m) → (2η, 2m) scaling.
//!
//! cargo run --release --example stationary_theory

use sgdthermo::linalg::max_abs;
use sgdthermo::models::{gen_regression_dataset, ModelSpec};
use sgdthermo::stationary::{find_minimum, wr_theory, Landscape};

fn main() -> sgdthermo::Result<()> {
    let data = gen_regression_dataset(200, 0.1, 1)?;
    let model = ModelSpec::nonlinear_regression(0.1, 10.0);
    let t0 = find_minimum(&model, &data, &[1.0, 1.0, 0.5, -0.5, 1.0, -1.0, 0.0], Landscape::Plain)?;

    let th = wr_theory(&model, &data, t0.as_slice(), 1e-7, 10)?;
    println!("Sigma diagonal {:?}", th.sigma.diagonal().iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>());
    println!("max |C| = {:.3e}, entropy rate = {:.4e} per step", max_abs(&th.c), th.entropy_rate);

    // Doubling η and m together leaves Σ nearly unchanged.
    let th2 = wr_theory(&model, &data, t0.as_slice(), 2e-7, 20)?;
    let worst = th
        .sigma
        .iter()
        .zip(th2.sigma.iter())
        .filter(|(a, _)| a.abs() > 1e-3 * max_abs(&th.sigma))
        .map(|(a, b)| ((b - a) / a).abs())
        .fold(0.0, f64::max);
    println!("(eta, m) -> (2eta, 2m): largest relative change of Sigma {worst:.3}");

    th.write_json(std::path::Path::new("theory_wr.json"))?;
    println!("wrote theory_wr.json");
    Ok(())
}
