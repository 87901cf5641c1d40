//! Measure the stationary covariance and the mean area swept per step on a
//! WR run and compare them with theory.
//!
//! cargo run --release --example circulation [steps]

use sgdthermo::engines::{run_into, EngineConfig, Mode};
use sgdthermo::experiment::compare::{dominant_diffs, pearson, worst_rel};
use sgdthermo::models::{gen_regression_dataset, ModelSpec};
use sgdthermo::stationary::{find_minimum, wr_theory, Landscape};
use sgdthermo::trajstats::{AnalyzerConfig, StationaryAnalyzer};

fn main() -> sgdthermo::Result<()> {
    let steps: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5_000_000);
    let data = gen_regression_dataset(200, 0.1, 1)?;
    let model = ModelSpec::nonlinear_regression(0.1, 10.0);
    let t0 = find_minimum(&model, &data, &[1.0, 1.0, 0.5, -0.5, 1.0, -1.0, 0.0], Landscape::Plain)?;
    let eta = 1e-7;
    let th = wr_theory(&model, &data, t0.as_slice(), eta, 10)?;

    let burn_in = steps / 10;
    let acfg = AnalyzerConfig::with_theory_bins(burn_in, vec![], th.entropy_rate, (steps - burn_in) / 20);
    let mut an = StationaryAnalyzer::from_theory(&th, &acfg)?;
    run_into(&model, &data, t0.as_slice(), &EngineConfig::new(Mode::SgdWr, eta, 10, steps, 3), &mut an)?;
    let rep = an.report(None);

    let s = dominant_diffs(&th.sigma, &rep.sigma_emp, &rep.sigma_se, true);
    let c = dominant_diffs(&th.c, &rep.area_rate_emp, &rep.area_rate_se, false);
    println!("{} records after burn-in", rep.records);
    println!("Sigma: worst relative error {:.3}, correlation {:.4}", worst_rel(&s), pearson(&th.sigma, &rep.sigma_emp, true));
    println!("C:     worst relative error {:.3}, correlation {:.4}", worst_rel(&c), pearson(&th.c, &rep.area_rate_emp, false));
    for d in c.iter().take(6) {
        println!("  C[{},{}] theory {:+.3e} measured {:+.3e} ± {:.1e}", d.i, d.j, d.theory, d.measured, d.se);
    }
    Ok(())
}
