//! Run each engine from the same start and save a trajectory.
//!
//! cargo run --release --example sgd_trajectories

use sgdthermo::engines::{run_into, run_sgd, EngineConfig, Mode, Trajectory};
use sgdthermo::models::{gen_regression_dataset, ModelSpec};
use sgdthermo::stationary::{find_minimum, Landscape};

fn main() -> sgdthermo::Result<()> {
    let data = gen_regression_dataset(200, 0.1, 1)?;
    let model = ModelSpec::nonlinear_regression(0.1, 10.0);
    let t0 = find_minimum(&model, &data, &[1.0, 1.0, 0.5, -0.5, 1.0, -1.0, 0.0], Landscape::Plain)?;
    let start: Vec<f64> = t0.iter().map(|t| t + 0.05).collect();
    let l0 = model.loss(&data, t0.as_slice());

    for mode in [Mode::Gd, Mode::SgdWr, Mode::SgdWor, Mode::Earthquake, Mode::Sgld, Mode::Sgworld] {
        let mut cfg = EngineConfig::new(mode, 1e-6, 10, 100_000, 7);
        cfg.zeta = 1e-3;
        cfg.thinning = 0;
        let mut traj = Trajectory::new(model.n_params(), cfg.clone());
        let fin = run_into(&model, &data, &start, &cfg, &mut traj)?;
        println!("{:<12} relative loss error after 1e5 steps: {:.3e}", mode.name(), model.loss(&data, &fin) / l0 - 1.0);
    }

    let mut cfg = EngineConfig::new(Mode::SgdWr, 1e-5, 10, 10_000, 7);
    cfg.thinning = 100;
    let traj = run_sgd(&model, &data, &start, &cfg)?;
    traj.write_binary(std::path::Path::new("wr_trajectory.bin"))?;
    traj.write_csv(std::path::Path::new("wr_trajectory.csv"))?;
    let back = Trajectory::read_binary(std::path::Path::new("wr_trajectory.bin"))?;
    println!("saved {} records; binary round trip exact: {}", traj.len(), back.theta(traj.len() - 1) == traj.theta(traj.len() - 1));
    Ok(())
}
