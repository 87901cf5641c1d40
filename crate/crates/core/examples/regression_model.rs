//! Build the Gaussian-bump regression set, find the minimum of the
//! regularized loss and inspect its curvature.
//!
//! cargo run --release --example regression_model

use sgdthermo::linalg::{rel_diff, sym_eigen};
use sgdthermo::models::{fd_hessian, gen_regression_dataset, ModelSpec};
use sgdthermo::stationary::{find_minimum, Landscape};

fn main() -> sgdthermo::Result<()> {
    let data = gen_regression_dataset(200, 0.1, 1)?;
    let model = ModelSpec::nonlinear_regression(0.1, 10.0);
    let start = [1.0, 1.0, 0.5, -0.5, 1.0, -1.0, 0.0];

    let theta0 = find_minimum(&model, &data, &start, Landscape::Plain)?;
    println!("theta0      = {:.5?}", theta0.as_slice());
    println!("loss        = {:.6}", model.loss(&data, theta0.as_slice()));
    println!("|grad|      = {:.2e}", model.gradient(&data, theta0.as_slice()).norm());

    let h = model.second_order(&data, theta0.as_slice(), false)?.h;
    let (eig, _) = sym_eigen(&h);
    println!("H eigenvalues {:?}", eig.iter().map(|v| format!("{v:.4e}")).collect::<Vec<_>>());
    println!("H vs finite differences: rel {:.2e}", rel_diff(&h, &fd_hessian(&model, &data, theta0.as_slice())));

    // The linearized model keeps only the output weights.
    let lin = ModelSpec::linearized_regression(0.1, 10.0);
    let t_lin = find_minimum(&lin, &data, &[0.0; 3], Landscape::Plain)?;
    println!("linearized minimum {:.5?}", t_lin.as_slice());
    Ok(())
}
