//! Linearized stationary-state theory near a minimum.
//!
//! With drift `ηH₀δθ` and constant diffusion `D₀`, the stationary density is
//! Gaussian with covariance `Σ` solving `H₀Σ + ΣH₀ = 2η⁻¹D₀`; the rotational
//! part of the current is carried by the antisymmetric `C = ½η(H₀Σ − ΣH₀)`.

mod minimize;
mod posterior;
mod sampler;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use minimize::{find_minimum, Landscape};
pub use posterior::{exact_posterior, exact_posterior_and_kl, gaussian_kl_bits, gaussian_kl_bits_deviation, PosteriorSpec};
pub use sampler::{kl_vs_eta, log_log_slope, sampler_theory, KlRow, Sampler, SamplerTheory};

use crate::diffusion::{self, WorInputs, WorVariant, WrVariant};
use crate::error::{invalid, Error, Result};
use crate::linalg::{pinv_sym, sym_eigen, symmetrize, Mat, Vector};
use crate::models::{Dataset, ModelSpec};

/// Relative eigenvalue cutoff for pseudo-inverses of `D₀` and `Σ`.
pub const PINV_CUTOFF: f64 = 1e-12;

/// Solve `H₀Σ + ΣH₀ = 2η⁻¹D₀` in the eigenbasis of `H₀`.
pub fn solve_lyapunov(h0: &Mat, d0: &Mat, eta: f64) -> Result<Mat> {
    if h0.shape() != d0.shape() || !h0.is_square() {
        return Err(invalid("H₀ and D₀ must be square and the same size"));
    }
    if !(eta > 0.0) {
        return Err(invalid("η must be positive"));
    }
    let (h, o) = sym_eigen(h0);
    if h[0] <= 0.0 {
        return Err(Error::NotAMinimum { eigenvalue: h[0] });
    }
    let dt = o.transpose() * symmetrize(d0) * &o;
    let n = h.len();
    let delta = Mat::from_fn(n, n, |a, b| 2.0 / eta * dt[(a, b)] / (h[a] + h[b]));
    Ok(symmetrize(&(&o * delta * o.transpose())))
}

#[derive(Debug, Clone)]
pub struct CorrectedLyapunov {
    pub sigma: Mat,
    pub iterations: usize,
    /// `‖½ℋ_D Σ‖ / ‖D(θ₀)‖` at the solution.
    pub correction_ratio: f64,
}

/// `(ℋ_D Σ)_{αβ} = Σ_{γδ} ∂_γ∂_δ D_{αβ}(θ₀) Σ_{γδ}` by central second differences.
pub fn hessian_of_diffusion_contract(
    d_fn: &dyn Fn(&[f64]) -> Result<Mat>,
    theta0: &[f64],
    sigma: &Mat,
) -> Result<Mat> {
    let n = theta0.len();
    let steps: Vec<f64> = theta0.iter().map(|t| 1e-4 * t.abs().max(1.0)).collect();
    let d0 = d_fn(theta0)?;
    let mut out = Mat::zeros(d0.nrows(), d0.ncols());
    let mut t = theta0.to_vec();
    for g in 0..n {
        let hg = steps[g];
        t[g] = theta0[g] + hg;
        let dp = d_fn(&t)?;
        t[g] = theta0[g] - hg;
        let dm = d_fn(&t)?;
        t[g] = theta0[g];
        out += (dp - &d0 * 2.0 + dm) * (sigma[(g, g)] / (hg * hg));
        for dl in g + 1..n {
            let hd = steps[dl];
            let mut corner = |sg: f64, sd: f64| -> Result<Mat> {
                t[g] = theta0[g] + sg * hg;
                t[dl] = theta0[dl] + sd * hd;
                let r = d_fn(&t);
                t[g] = theta0[g];
                t[dl] = theta0[dl];
                r
            };
            let mixed = (corner(1.0, 1.0)? - corner(1.0, -1.0)? - corner(-1.0, 1.0)? + corner(-1.0, -1.0)?) / (4.0 * hg * hd);
            // Σ is symmetric, so the (γ,δ) and (δ,γ) terms are equal.
            out += mixed * (2.0 * sigma[(g, dl)]);
        }
    }
    Ok(symmetrize(&out))
}

/// Solve `s(H₀Σ + ΣH₀) = η⁻¹(2D(θ₀) + ℋ_D(θ₀)Σ)` by fixed-point iteration.
pub fn solve_lyapunov_corrected(
    h0: &Mat,
    d_fn: &dyn Fn(&[f64]) -> Result<Mat>,
    theta0: &[f64],
    eta: f64,
    s: f64,
) -> Result<CorrectedLyapunov> {
    corrected_fixed_point(h0, d_fn, theta0, eta, s, None)
}

/// Deviation `Δ = Σ − Σ_ref` when the total noise is `D_ref + D(θ)` and
/// `Σ_ref` already balances the constant `D_ref`:
/// `s(H₀Δ + ΔH₀) = η⁻¹(2D(θ₀) + ℋ_D(θ₀)(Σ_ref + Δ))`.
///
/// Solving for Δ directly keeps full relative precision when Δ is many orders
/// of magnitude below Σ_ref. The returned `sigma` field holds Δ.
pub fn solve_lyapunov_deviation(
    h0: &Mat,
    d_fn: &dyn Fn(&[f64]) -> Result<Mat>,
    theta0: &[f64],
    eta: f64,
    s: f64,
    sigma_ref: &Mat,
) -> Result<CorrectedLyapunov> {
    corrected_fixed_point(h0, d_fn, theta0, eta, s, Some(sigma_ref))
}

fn corrected_fixed_point(
    h0: &Mat,
    d_fn: &dyn Fn(&[f64]) -> Result<Mat>,
    theta0: &[f64],
    eta: f64,
    s: f64,
    offset: Option<&Mat>,
) -> Result<CorrectedLyapunov> {
    let contract = |sig: &Mat| -> Result<Mat> {
        match offset {
            Some(o) => hessian_of_diffusion_contract(d_fn, theta0, &(o + sig)),
            None => hessian_of_diffusion_contract(d_fn, theta0, sig),
        }
    };
    let hs = h0 * s;
    let d0 = d_fn(theta0)?;
    let mut sigma = solve_lyapunov(&hs, &d0, eta)?;
    let d_norm = d0.norm().max(f64::MIN_POSITIVE);
    let mut last_change = f64::INFINITY;
    let mut growth = 0;
    for it in 1..=500 {
        let corr = contract(&sigma)? * 0.5;
        let ratio = corr.norm() / d_norm;
        let next = solve_lyapunov(&hs, &(&d0 + &corr), eta)?;
        let change = (&next - &sigma).norm() / next.norm().max(f64::MIN_POSITIVE);
        sigma = next;
        if !change.is_finite() || ratio >= 1.0 {
            return Err(Error::CorrectionTooLarge { ratio });
        }
        if change <= 1e-10 {
            return Ok(CorrectedLyapunov { sigma, iterations: it, correction_ratio: ratio });
        }
        growth = if change > last_change { growth + 1 } else { 0 };
        if growth >= 3 {
            return Err(Error::CorrectionTooLarge { ratio });
        }
        last_change = change;
    }
    let ratio = (contract(&sigma)? * 0.5).norm() / d_norm;
    Err(Error::CorrectionTooLarge { ratio })
}

#[derive(Debug, Clone)]
pub struct Circulation {
    pub c: Mat,
    pub entropy_rate: f64,
    pub area_rate: Mat,
    /// Directions of `D₀` dropped by the pseudo-inverse cutoff.
    pub dropped_directions: usize,
}

/// `C = ½η(H₀Σ − ΣH₀)`, entropy rate `−tr(C D₀⁻¹ C Σ⁻¹)`, area rate `C`.
pub fn circulation_and_rates(h0: &Mat, sigma: &Mat, d0: &Mat, eta: f64) -> Result<Circulation> {
    if h0.shape() != sigma.shape() || d0.shape() != sigma.shape() {
        return Err(invalid("H₀, Σ and D₀ must have the same shape"));
    }
    let c = (h0 * sigma - sigma * h0) * (0.5 * eta);
    let c = (&c - c.transpose()) * 0.5;
    let (d_inv, dropped) = pinv_sym(d0, PINV_CUTOFF);
    if dropped > 0 {
        log::warn!("D₀ has {dropped} direction(s) below the pseudo-inverse cutoff");
    }
    let (s_inv, _) = pinv_sym(sigma, PINV_CUTOFF);
    let entropy_rate = if c.norm() == 0.0 { 0.0 } else { -(&c * &d_inv * &c * &s_inv).trace() };
    Ok(Circulation { area_rate: c.clone(), c, entropy_rate, dropped_directions: dropped })
}

/// Bundle of stationary-state predictions around one minimum.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StationaryTheory {
    pub mode: String,
    pub eta: f64,
    #[serde(with = "crate::io::vec_plain")]
    pub theta0: Vector,
    #[serde(with = "crate::io::mat_rows")]
    pub h0: Mat,
    #[serde(with = "crate::io::mat_rows")]
    pub d0: Mat,
    #[serde(with = "crate::io::mat_rows")]
    pub sigma: Mat,
    #[serde(with = "crate::io::mat_rows")]
    pub c: Mat,
    pub entropy_rate: f64,
}

impl StationaryTheory {
    pub fn from_parts(mode: &str, eta: f64, theta0: Vector, h0: Mat, d0: Mat) -> Result<Self> {
        let sigma = solve_lyapunov(&h0, &d0, eta)?;
        let circ = circulation_and_rates(&h0, &sigma, &d0, eta)?;
        Ok(Self { mode: mode.to_string(), eta, theta0, h0, d0, sigma, c: circ.c, entropy_rate: circ.entropy_rate })
    }

    /// `K = Σ⁻¹ C D₀⁻¹`, so one step contributes `σ_k = δθ_kᵀ K Δθ_k`.
    pub fn entropy_kernel(&self) -> Mat {
        let (s_inv, _) = pinv_sym(&self.sigma, PINV_CUTOFF);
        let (d_inv, _) = pinv_sym(&self.d0, PINV_CUTOFF);
        s_inv * &self.c * d_inv
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        crate::io::write_json(path, self)
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// WR SGD theory at the minimum `theta0` of 𝓛.
pub fn wr_theory(model: &ModelSpec, data: &Dataset, theta0: &[f64], eta: f64, m: usize) -> Result<StationaryTheory> {
    let b = model.evaluate(data, theta0, None)?;
    let h0 = model.second_order(data, theta0, false)?.h;
    let d0 = diffusion::diffusion_wr(&b.v, &b.grad_data(), eta, m, data.len(), WrVariant::Exact)?;
    StationaryTheory::from_parts("sgd-wr", eta, Vector::from_column_slice(theta0), h0, d0)
}

/// WOR diffusion matrix of a model at θ, falling back to `Hdh` when the
/// per-sample tensors exceed their budgets.
pub fn wor_diffusion_at(model: &ModelSpec, data: &Dataset, theta: &[f64], eta: f64, m: usize, variant: WorVariant) -> Result<Mat> {
    let m_total = data.len();
    let variant = diffusion::auto_wor_variant(model.n_params(), m_total, diffusion::DEFAULT_S_BUDGET, variant);
    let b = model.evaluate(data, theta, None)?;
    let want_u = variant != WorVariant::Hdh;
    let so = model.second_order(data, theta, want_u && model.per_sample_hessian_capable(m_total))?;
    let inp = WorInputs { v: &b.v, u: so.u.as_deref(), x: &b.x, y: &b.y, h: Some(&so.h) };
    diffusion::diffusion_wor(&inp, eta, m, variant)
}

/// Epoch-level WOR theory at the minimum `theta_hat0` of 𝓛̂: Hessian of 𝓛̂ and `D̂` there.
pub fn wor_theory(
    model: &ModelSpec,
    data: &Dataset,
    theta_hat0: &[f64],
    eta: f64,
    m: usize,
    variant: WorVariant,
) -> Result<StationaryTheory> {
    let h0 = Landscape::Wor { eta, m }.hessian(model, data, theta_hat0)?;
    let d0 = wor_diffusion_at(model, data, theta_hat0, eta, m, variant)?;
    StationaryTheory::from_parts("sgd-wor", eta, Vector::from_column_slice(theta_hat0), symmetrize(&h0), d0)
}

/// Earthquake model: `D = ½η²ζ²H₀²`, giving `Σ = (ηζ²/2)H₀` and `C = 0`.
pub fn earthquake_theory(model: &ModelSpec, data: &Dataset, theta0: &[f64], eta: f64, zeta: f64) -> Result<StationaryTheory> {
    let h0 = model.second_order(data, theta0, false)?.h;
    let d0 = &h0 * &h0 * (0.5 * eta * eta * zeta * zeta);
    StationaryTheory::from_parts("earthquake", eta, Vector::from_column_slice(theta0), h0, d0)
}
