//! SGD without replacement sits at a shifted minimum with tiny fluctuations.
//!
//! cargo run --release --example wor_effective_minimum

use sgdthermo::diffusion::WorVariant;
use sgdthermo::engines::{run_into, EngineConfig, Mode};
use sgdthermo::models::{gen_regression_dataset, ModelSpec};
use sgdthermo::stationary::{find_minimum, wor_theory, wr_theory, Landscape};
use sgdthermo::trajstats::{AnalyzerConfig, StationaryAnalyzer};

fn main() -> sgdthermo::Result<()> {
    let data = gen_regression_dataset(200, 0.1, 1)?;
    let model = ModelSpec::nonlinear_regression(0.1, 10.0);
    let (eta, m) = (1e-7, 10);
    let t0 = find_minimum(&model, &data, &[1.0, 1.0, 0.5, -0.5, 1.0, -1.0, 0.0], Landscape::Plain)?;
    let hat = find_minimum(&model, &data, t0.as_slice(), Landscape::Wor { eta, m })?;
    println!("|theta_hat0 - theta0| = {:.3e}", (&hat - &t0).norm());

    let wor = wor_theory(&model, &data, hat.as_slice(), eta, m, WorVariant::Exact)?;
    let wr = wr_theory(&model, &data, t0.as_slice(), eta, m)?;
    println!("tr Sigma: WOR {:.3e}, WR {:.3e}, ratio {:.2e}", wor.sigma.trace(), wr.sigma.trace(), wor.sigma.trace() / wr.sigma.trace());

    // Epoch-boundary samples, analysed in epoch units.
    let n = (data.len() / m) as u64;
    let steps = 2_000_000;
    let acfg = AnalyzerConfig::with_theory_bins(steps / n / 4, vec![], 0.0, 5_000);
    let mut an = StationaryAnalyzer::from_theory(&wor, &acfg)?;
    struct Epochs<'a>(&'a mut StationaryAnalyzer, u64);
    impl sgdthermo::engines::TrajectorySink for Epochs<'_> {
        fn record(&mut self, step: u64, theta: &[f64]) {
            self.0.record(step / self.1, theta);
        }
    }
    run_into(&model, &data, t0.as_slice(), &EngineConfig::new(Mode::SgdWor, eta, m, steps, 9), &mut Epochs(&mut an, n))?;
    let rep = an.report(None);
    println!("measured: |mean - theta_hat0| = {:.3e}, tr Sigma = {:.3e}", rep.mu_emp.norm(), rep.sigma_emp.trace());
    Ok(())
}
