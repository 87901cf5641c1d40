//! Stationary covariance of the posterior samplers SGLD and SGWORLD, and
//! their KL divergence from the Laplace posterior `N(θ₀, H₀⁻¹)`.

use serde::{Deserialize, Serialize};

use super::{find_minimum, gaussian_kl_bits_deviation, solve_lyapunov_corrected, solve_lyapunov_deviation, Landscape};
use crate::diffusion::{diffusion_wr, WorVariant, WrVariant};
use crate::error::{invalid, Error, Result};
use crate::linalg::{symmetrize, Mat, Vector};
use crate::models::{Dataset, ModelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampler {
    /// Drift `ηH₀`, noise `ηI + D`.
    Sgld,
    /// Epoch drift `ηnH₀` (the correction removes `δ𝓛`), noise `ηnI + D̂`.
    Sgworld,
    /// Epoch drift from the Hessian of `𝓛̂ = n𝓛 + δ𝓛` around its own minimum.
    SgworldUncorrected,
}

impl Sampler {
    pub fn name(self) -> &'static str {
        match self {
            Sampler::Sgld => "sgld",
            Sampler::Sgworld => "sgworld",
            Sampler::SgworldUncorrected => "sgworld-uncorrected",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplerTheory {
    pub sampler: Sampler,
    pub eta: f64,
    /// Centre of the stationary distribution.
    #[serde(with = "crate::io::vec_plain")]
    pub mean: Vector,
    #[serde(with = "crate::io::mat_rows")]
    pub sigma: Mat,
    /// `Σ − Σ_po`, computed directly rather than by subtraction.
    #[serde(with = "crate::io::mat_rows")]
    pub deviation: Mat,
    pub kl_bits: f64,
    pub iterations: usize,
    pub correction_ratio: f64,
}

/// Minibatch part of the sampler noise at θ.
fn minibatch_noise(model: &ModelSpec, data: &Dataset, theta: &[f64], eta: f64, m: usize, sampler: Sampler) -> Result<Mat> {
    match sampler {
        Sampler::Sgld => {
            let b = model.evaluate(data, theta, None)?;
            diffusion_wr(&b.v, &b.grad_data(), eta, m, data.len(), WrVariant::Exact)
        }
        _ => super::wor_diffusion_at(model, data, theta, eta, m, WorVariant::Hdh),
    }
}

/// Stationary theory of one sampler at learning rate `eta`, with the
/// varying-diffusion correction; `theta0` must minimize 𝓛.
pub fn sampler_theory(
    model: &ModelSpec,
    data: &Dataset,
    theta0: &[f64],
    eta: f64,
    m: usize,
    sampler: Sampler,
) -> Result<SamplerTheory> {
    let m_total = data.len();
    if sampler != Sampler::Sgld && (m == 0 || !m_total.is_multiple_of(m)) {
        return Err(invalid(format!("SGWORLD needs M divisible by m (M={m_total}, m={m})")));
    }
    let n = (m_total / m.max(1)) as f64;
    let h0 = symmetrize(&model.second_order(data, theta0, false)?.h);
    let sigma_po = h0.clone().cholesky().ok_or_else(|| invalid("H₀ is not positive definite"))?.inverse();
    let sigma_po = symmetrize(&sigma_po);
    let noise = |t: &[f64]| minibatch_noise(model, data, t, eta, m, sampler);
    match sampler {
        Sampler::Sgld | Sampler::Sgworld => {
            // Σ_po balances the injected noise exactly: s(H₀Σ_po + Σ_poH₀) = 2sI.
            let s = if sampler == Sampler::Sgld { 1.0 } else { n };
            let dev = solve_lyapunov_deviation(&h0, &noise, theta0, eta, s, &sigma_po)?;
            let kl = gaussian_kl_bits_deviation(&sigma_po, &dev.sigma, &Vector::zeros(theta0.len()))?;
            Ok(SamplerTheory {
                sampler,
                eta,
                mean: Vector::from_column_slice(theta0),
                sigma: &sigma_po + &dev.sigma,
                deviation: dev.sigma,
                kl_bits: kl,
                iterations: dev.iterations,
                correction_ratio: dev.correction_ratio,
            })
        }
        Sampler::SgworldUncorrected => {
            let landscape = Landscape::Wor { eta, m };
            let theta_hat = find_minimum(model, data, theta0, landscape)?;
            let h_hat = symmetrize(&landscape.hessian(model, data, theta_hat.as_slice())?);
            let k = theta0.len();
            let total = |t: &[f64]| Ok(noise(t)? + Mat::identity(k, k) * (eta * n));
            let sol = solve_lyapunov_corrected(&h_hat, &total, theta_hat.as_slice(), eta, 1.0)?;
            let deviation = &sol.sigma - &sigma_po;
            let shift = &theta_hat - Vector::from_column_slice(theta0);
            let kl = gaussian_kl_bits_deviation(&sigma_po, &deviation, &shift)?;
            Ok(SamplerTheory {
                sampler,
                eta,
                mean: theta_hat,
                sigma: sol.sigma,
                deviation,
                kl_bits: kl,
                iterations: sol.iterations,
                correction_ratio: sol.correction_ratio,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlRow {
    pub eta: f64,
    pub kl_sgld: f64,
    pub kl_sgworld: f64,
    pub kl_sgworld_uncorrected: f64,
}

/// KL divergence of all three samplers over a grid of learning rates.
///
/// Where a sampler has no stable stationary state (no minimum of 𝓛̂, or a
/// diverging diffusion correction) its entry is NaN.
pub fn kl_vs_eta(model: &ModelSpec, data: &Dataset, theta0: &[f64], etas: &[f64], m: usize) -> Result<Vec<KlRow>> {
    etas.iter()
        .map(|&eta| {
            let kl = |s: Sampler| match sampler_theory(model, data, theta0, eta, m, s) {
                Ok(t) => Ok(t.kl_bits),
                Err(e @ (Error::NotAMinimum { .. } | Error::NoMinimum { .. } | Error::CorrectionTooLarge { .. })) => {
                    log::warn!("{} at η = {eta:e}: {e}", s.name());
                    Ok(f64::NAN)
                }
                Err(e) => Err(e),
            };
            Ok(KlRow {
                eta,
                kl_sgld: kl(Sampler::Sgld)?,
                kl_sgworld: kl(Sampler::Sgworld)?,
                kl_sgworld_uncorrected: kl(Sampler::SgworldUncorrected)?,
            })
        })
        .collect()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{design_matrix, gen_regression_dataset};
    use crate::stationary::exact_posterior;

    fn setup() -> (ModelSpec, Dataset, Vector) {
        let model = ModelSpec::linearized_regression(0.1, 10.0);
        let data = gen_regression_dataset(200, 0.1, 1).unwrap();
        let th0 = find_minimum(&model, &data, &[0.0, 0.0, 0.0], Landscape::Plain).unwrap();
        (model, data, th0)
    }

    #[test]
    fn laplace_reference_is_the_exact_posterior() {
        let (model, data, th0) = setup();
        let y = Vector::from_iterator(200, (0..200).map(|i| data.output(i)[0]));
        let post = exact_posterior(&design_matrix(&data), &y, 0.1, 10.0).unwrap();
        assert!((&post.theta0 - &th0).norm() < 1e-10 * th0.norm());
        let t = sampler_theory(&model, &data, th0.as_slice(), 1e-6, 10, Sampler::Sgld).unwrap();
        let sigma_po = &t.sigma - &t.deviation;
        assert!(crate::linalg::rel_diff(&sigma_po, &post.sigma_po) < 1e-12);
    }

    #[test]
    fn full_batch_samplers_are_exact() {
        let (model, data, th0) = setup();
        for s in [Sampler::Sgld, Sampler::Sgworld, Sampler::SgworldUncorrected] {
            let t = sampler_theory(&model, &data, th0.as_slice(), 1e-6, 200, s).unwrap();
            assert!(t.kl_bits.abs() < 1e-20, "{}: {}", s.name(), t.kl_bits);
        }
    }

    #[test]
    fn kl_ordering_and_scaling() {
        let (model, data, th0) = setup();
        let etas = [1e-7, 1e-6, 1e-5];
        let rows = kl_vs_eta(&model, &data, th0.as_slice(), &etas, 10).unwrap();
        // The WOR epoch map is unstable at η = 1e-5 (ηnH₀ > 2), so 𝓛̂ has no minimum.
        assert!(rows[2].kl_sgworld_uncorrected.is_nan());
        for r in &rows[..2] {
            assert!(r.kl_sgworld < r.kl_sgld, "{r:?}");
            assert!(r.kl_sgworld < r.kl_sgworld_uncorrected, "{r:?}");
        }
        let x: Vec<f64> = rows.iter().map(|r| r.eta).collect();
        let sgld: Vec<f64> = rows.iter().map(|r| r.kl_sgld).collect();
        assert!((log_log_slope(&x, &sgld) - 2.0).abs() < 0.3);
    }

    #[test]
    fn deviation_route_matches_direct_route_when_resolvable() {
        // At large η the deviation is well above rounding, so solving for Σ
        // directly must agree with solving for Σ − Σ_po.
        let (model, data, th0) = setup();
        let eta = 1e-5;
        let t = sampler_theory(&model, &data, th0.as_slice(), eta, 10, Sampler::Sgld).unwrap();
        let h0 = model.second_order(&data, th0.as_slice(), false).unwrap().h;
        let total = |p: &[f64]| Ok(minibatch_noise(&model, &data, p, eta, 10, Sampler::Sgld)? + Mat::identity(3, 3) * eta);
        let direct = solve_lyapunov_corrected(&h0, &total, th0.as_slice(), eta, 1.0).unwrap();
        assert!(crate::linalg::rel_diff(&direct.sigma, &t.sigma) < 1e-9);
    }

    #[test]
    fn slope_of_power_law() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powi(6)).collect();
        assert!((log_log_slope(&x, &y) - 6.0).abs() < 1e-12);
    }
}
