//! Minibatch diffusion matrices: closed forms next to brute-force enumeration.
//!
//! cargo run --release --example diffusion_matrices

use sgdthermo::diffusion::{diffusion_wr, oracle_wor_moments, oracle_wr, WorMoments, WrVariant};
use sgdthermo::linalg::{rel_diff, Mat, Vector};
use sgdthermo::models::{gen_regression_dataset, ModelSpec};
use sgdthermo::stationary::{find_minimum, wor_diffusion_at, Landscape};
use sgdthermo::diffusion::WorVariant;

fn main() -> sgdthermo::Result<()> {
    // Toy per-sample gradients, M = 5.
    let v = Mat::from_row_slice(2, 5, &[1.0, -0.5, 0.3, 2.0, -1.2, 0.1, 0.7, -0.4, 0.0, 0.9]);
    let g: Vector = v.column_sum();
    for m in 1..=5 {
        let closed = diffusion_wr(&v, &g, 0.1, m, 5, WrVariant::Exact)?;
        let brute = oracle_wr(&v, &g, 0.1, m, 5)?;
        println!("WR m={m}: closed form vs enumeration rel {:.1e}", rel_diff(&closed, &brute).min(closed.norm()));
    }

    // Epoch statistics without replacement, M = 6, m = 2.
    let rep = oracle_wor_moments(6, 2)?;
    let exact = WorMoments::exact(2, 6)?;
    println!("WOR table vs enumeration: {} mismatches", rep.mismatches(&exact, 1e-12).len());
    for c in &rep.classes {
        println!("  {:<8} members {:>5}  value {:+.6}", c.name, c.members, c.enumerated);
    }

    // On the regression model the WOR noise is orders of magnitude smaller.
    let data = gen_regression_dataset(200, 0.1, 1)?;
    let model = ModelSpec::nonlinear_regression(0.1, 10.0);
    let t0 = find_minimum(&model, &data, &[1.0, 1.0, 0.5, -0.5, 1.0, -1.0, 0.0], Landscape::Plain)?;
    let b = model.evaluate(&data, t0.as_slice(), None)?;
    let d_wr = diffusion_wr(&b.v, &b.grad_data(), 1e-7, 10, 200, WrVariant::Exact)?;
    let d_wor = wor_diffusion_at(&model, &data, t0.as_slice(), 1e-7, 10, WorVariant::Exact)?;
    println!("tr D_WR = {:.3e} per step, tr D_WOR = {:.3e} per epoch", d_wr.trace(), d_wor.trace());
    Ok(())
}
