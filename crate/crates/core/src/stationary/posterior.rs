//! Exact Gaussian posterior of the linearized model and KL divergences in bits.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{Mat, Vector};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PosteriorSpec {
    #[serde(with = "crate::io::vec_plain")]
    pub theta0: Vector,
    #[serde(with = "crate::io::mat_rows")]
    pub sigma_po: Mat,
}

/// `Σ_po = ((1/ε²)ΨΨᵀ + 2λI)⁻¹`, `θ₀ = (1/ε²) Σ_po Ψ y`.
pub fn exact_posterior(psi: &Mat, y: &Vector, epsilon: f64, lambda: f64) -> Result<PosteriorSpec> {
    if psi.ncols() != y.len() {
        return Err(invalid("Ψ must have one column per observation"));
    }
    let k = psi.nrows();
    let inv_e2 = 1.0 / (epsilon * epsilon);
    let h0 = psi * psi.transpose() * inv_e2 + Mat::identity(k, k) * (2.0 * lambda);
    let sigma_po = h0
        .cholesky()
        .ok_or_else(|| invalid("posterior precision is not positive definite"))?
        .inverse();
    let theta0 = &sigma_po * (psi * y) * inv_e2;
    Ok(PosteriorSpec { theta0, sigma_po: crate::linalg::symmetrize(&sigma_po) })
}

fn ln_det_spd(a: &Mat, what: &str) -> Result<f64> {
    let ch = a.clone().cholesky().ok_or_else(|| invalid(format!("{what} is not symmetric positive definite")))?;
    Ok(2.0 * ch.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// `KL(N(μ_q, Σ_q) ‖ N(μ_p, Σ_p))` in bits.
pub fn gaussian_kl_bits(mu_q: &Vector, sigma_q: &Mat, mu_p: &Vector, sigma_p: &Mat) -> Result<f64> {
    let k = sigma_p.nrows();
    let ld_q = ln_det_spd(sigma_q, "candidate covariance")?;
    let ld_p = ln_det_spd(sigma_p, "reference covariance")?;
    let p_inv = sigma_p.clone().cholesky().expect("checked above").inverse();
    let dmu = mu_p - mu_q;
    let nats = 0.5 * ((&p_inv * sigma_q).trace() + dmu.dot(&(&p_inv * &dmu)) - k as f64 + ld_p - ld_q);
    Ok(nats / std::f64::consts::LN_2)
}

/// `KL(N(μ_p + δμ, Σ_p + Δ) ‖ N(μ_p, Σ_p))` in bits, accurate even when `Δ`
/// is far below the rounding level of `Σ_p`.
pub fn gaussian_kl_bits_deviation(sigma_p: &Mat, delta: &Mat, dmu: &Vector) -> Result<f64> {
    let k = sigma_p.nrows();
    if delta.shape() != (k, k) || dmu.len() != k {
        return Err(invalid("deviation shapes do not match the reference covariance"));
    }
    let ch = sigma_p.clone().cholesky().ok_or_else(|| invalid("reference covariance is not symmetric positive definite"))?;
    let l_inv = ch.l().try_inverse().ok_or_else(|| invalid("singular Cholesky factor"))?;
    let e = crate::linalg::symmetrize(&(&l_inv * delta * l_inv.transpose()));
    let (ev, _) = crate::linalg::sym_eigen(&e);
    let mut nats = 0.0;
    for &x in ev.iter() {
        if x <= -1.0 {
            return Err(invalid("candidate covariance is not positive definite"));
        }
        nats += x_minus_ln1p(x);
    }
    let w = &l_inv * dmu;
    nats += w.dot(&w);
    Ok(0.5 * nats / std::f64::consts::LN_2)
}

/// `x − ln(1 + x)` without cancellation near zero.
fn x_minus_ln1p(x: f64) -> f64 {
    if x.abs() < 1e-3 {
        x * x * (0.5 - x * (1.0 / 3.0 - x * (0.25 - x * 0.2)))
    } else {
        x - x.ln_1p()
    }
}

/// Posterior for `(Ψ, y)` and the KL divergence in bits of a zero-mean-shift
/// Gaussian with covariance `sigma_candidate` from it.
pub fn exact_posterior_and_kl(
    psi: &Mat,
    y: &Vector,
    epsilon: f64,
    lambda: f64,
    sigma_candidate: &Mat,
) -> Result<(PosteriorSpec, f64)> {
    let post = exact_posterior(psi, y, epsilon, lambda)?;
    if sigma_candidate.shape() != post.sigma_po.shape() {
        return Err(invalid("candidate covariance has the wrong shape"));
    }
    let kl = gaussian_kl_bits(&post.theta0, sigma_candidate, &post.theta0, &post.sigma_po)?;
    Ok((post, kl))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{design_matrix, gen_regression_dataset};

    fn setup() -> (Mat, Vector) {
        let data = gen_regression_dataset(200, 0.1, 1).unwrap();
        let y = Vector::from_iterator(200, (0..200).map(|i| data.output(i)[0]));
        (design_matrix(&data), y)
    }

    #[test]
    fn deviation_kl_matches_direct_formula() {
        let sp = Mat::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let d = Mat::from_row_slice(2, 2, &[0.4, -0.1, -0.1, 0.2]);
        let mu = Vector::from_vec(vec![0.1, -0.3]);
        let direct = gaussian_kl_bits(&mu, &(&sp + &d), &Vector::zeros(2), &sp).unwrap();
        let dev = gaussian_kl_bits_deviation(&sp, &d, &mu).unwrap();
        assert!((direct - dev).abs() < 1e-14, "{direct} vs {dev}");
    }

    #[test]
    fn deviation_kl_is_quadratic_for_tiny_deviations() {
        // KL ≈ tr(E²)/(4 ln 2) with E = Σ_p⁻¹Δ: exact scaling over twelve decades.
        let sp = Mat::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let d = Mat::from_row_slice(2, 2, &[0.4, -0.1, -0.1, 0.2]);
        let e = sp.clone().try_inverse().unwrap() * &d;
        let want = (&e * &e).trace() / (4.0 * std::f64::consts::LN_2);
        for scale in [1e-6, 1e-10, 1e-14, 1e-18] {
            let kl = gaussian_kl_bits_deviation(&sp, &(&d * scale), &Vector::zeros(2)).unwrap();
            assert!((kl / (want * scale * scale) - 1.0).abs() < 1e-5, "scale {scale}: {kl}");
        }
    }

    #[test]
    fn identical_gaussians_have_zero_kl() {
        let (psi, y) = setup();
        let post = exact_posterior(&psi, &y, 0.1, 10.0).unwrap();
        let (_, kl) = exact_posterior_and_kl(&psi, &y, 0.1, 10.0, &post.sigma_po).unwrap();
        assert!(kl.abs() < 1e-12);
    }

    #[test]
    fn doubled_covariance() {
        let (psi, y) = setup();
        let post = exact_posterior(&psi, &y, 0.1, 10.0).unwrap();
        let (_, kl) = exact_posterior_and_kl(&psi, &y, 0.1, 10.0, &(post.sigma_po * 2.0)).unwrap();
        let ln2 = std::f64::consts::LN_2;
        let want = 3.0 / (2.0 * ln2) * (1.0 - ln2);
        assert!((kl - want).abs() < 1e-10);
        assert!((kl - 0.664).abs() < 1e-3);
    }

    #[test]
    fn non_spd_candidate_rejected() {
        let (psi, y) = setup();
        let bad = Mat::from_diagonal(&Vector::from_vec(vec![1.0, -1.0, 1.0]));
        assert!(exact_posterior_and_kl(&psi, &y, 0.1, 10.0, &bad).is_err());
    }

    #[test]
    fn mean_shift_adds_mahalanobis_term() {
        let s = Mat::identity(2, 2);
        let a = Vector::zeros(2);
        let b = Vector::from_vec(vec![1.0, 0.0]);
        let kl = gaussian_kl_bits(&b, &s, &a, &s).unwrap();
        assert!((kl - 0.5 / std::f64::consts::LN_2).abs() < 1e-14);
    }
}
