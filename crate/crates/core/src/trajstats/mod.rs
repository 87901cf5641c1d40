//! Empirical stationary statistics: moments, stochastic area, entropy
//! production, fluctuation theorems and the trace fluctuation-dissipation
//! relation.
//!
//! The free functions here are direct reference implementations over stored
//! trajectories. [`StationaryAnalyzer`] computes the same quantities in one
//! streaming pass, for runs too long to keep in memory.

mod ou;
mod stream;

use serde::{Deserialize, Serialize};

pub use ou::{simulate_ou, OuProcess};
pub use stream::{AnalyzerConfig, BlockMeans, SigmaStream, StationaryAnalyzer};

use crate::engines::Trajectory;
use crate::error::{invalid, Error, Result};
use crate::linalg::{Mat, Vector};
use crate::models::{Dataset, ModelSpec};
use crate::stationary::StationaryTheory;

/// Fewest post-burn-in records accepted by the moment estimators.
pub const MIN_SAMPLES: usize = 100;
/// Fewest counts on each side of a DFT bin pair.
pub const MIN_BIN_COUNT: u64 = 100;

fn insufficient(what: &str, have: usize) -> Error {
    Error::InsufficientData(format!("{what}: {have} sample(s), need at least {MIN_SAMPLES}"))
}

/// Mean of `δθ = θ − θ_ref` and the second-moment matrix `⟨δθδθᵀ⟩` over
/// records `burn_in..`.
pub fn empirical_moments(traj: &Trajectory, theta_ref: &[f64], burn_in: usize) -> Result<(Vector, Mat)> {
    let n = traj.n_params();
    if theta_ref.len() != n {
        return Err(invalid("θ_ref has the wrong length"));
    }
    let count = traj.len().saturating_sub(burn_in);
    if count < MIN_SAMPLES {
        return Err(insufficient("empirical moments", count));
    }
    let mut mu = Vector::zeros(n);
    let mut sigma = Mat::zeros(n, n);
    for k in burn_in..traj.len() {
        let d = Vector::from_iterator(n, traj.theta(k).iter().zip(theta_ref).map(|(t, r)| t - r));
        mu += &d;
        sigma += &d * d.transpose();
    }
    let c = count as f64;
    Ok((mu / c, sigma / c))
}

/// Oriented area swept around `theta0`:
/// `A_αγ = ½Σ_k [δθ_{k,α}Δ_{k,γ} − δθ_{k,γ}Δ_{k,α}]`.
pub fn area_matrix(subtraj: &[&[f64]], theta0: &[f64]) -> Result<Mat> {
    let n = theta0.len();
    if subtraj.len() < 2 {
        return Err(invalid("area needs at least two points"));
    }
    if subtraj.iter().any(|t| t.len() != n) {
        return Err(invalid("point dimension differs from θ₀"));
    }
    let mut a = Mat::zeros(n, n);
    for w in subtraj.windows(2) {
        for al in 0..n {
            let da = w[0][al] - theta0[al];
            let sa = w[1][al] - w[0][al];
            for ga in 0..n {
                let dg = w[0][ga] - theta0[ga];
                let sg = w[1][ga] - w[0][ga];
                a[(al, ga)] += 0.5 * (da * sg - dg * sa);
            }
        }
    }
    Ok(a)
}

/// `σ = Σ_k v^s(θ_k)·D₀⁻¹·(θ_{k+1} − θ_k)` with `v^s(θ) = −CΣ⁻¹(θ − θ₀)`.
pub fn entropy_production(subtraj: &[&[f64]], theory: &StationaryTheory) -> Result<f64> {
    let n = theory.theta0.len();
    if subtraj.iter().any(|t| t.len() != n) {
        return Err(invalid("point dimension differs from the theory"));
    }
    let (s_inv, _) = crate::linalg::pinv_sym(&theory.sigma, crate::stationary::PINV_CUTOFF);
    let (d_inv, _) = crate::linalg::pinv_sym(&theory.d0, crate::stationary::PINV_CUTOFF);
    let mut sigma = 0.0;
    for w in subtraj.windows(2) {
        let d = Vector::from_iterator(n, w[0].iter().zip(theory.theta0.iter()).map(|(t, r)| t - r));
        let step = Vector::from_iterator(n, w[1].iter().zip(w[0]).map(|(b, a)| b - a));
        let vs = -(&theory.c * (&s_inv * d));
        sigma += vs.dot(&(&d_inv * step));
    }
    Ok(sigma)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DftPoint {
    /// Bin centre `σ > 0`.
    pub sigma: f64,
    /// `ln[𝒫(−σ)/𝒫(σ)]`; the fluctuation theorem predicts `−σ`.
    pub log_ratio: f64,
    pub count_pos: u64,
    pub count_neg: u64,
}

/// Fluctuation-theorem summary for one window length ℓ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllReport {
    pub ell: usize,
    pub count: u64,
    pub mean_sigma: f64,
    pub mean_sigma_se: f64,
    /// `⟨e^{−σ}⟩`.
    pub ift: f64,
    pub ift_se: f64,
    pub bin_width: f64,
    pub dft_curve: Vec<DftPoint>,
    /// Weighted least-squares slope through the origin of `dft_curve`; `−1` in theory.
    pub dft_slope: Option<f64>,
    pub dft_slope_se: Option<f64>,
    /// Positive bin centres dropped for having fewer than the minimum counts.
    pub excluded_bins: Vec<f64>,
    /// Histogram over symmetric bins `k·w ± w/2` as `(k, count)`.
    pub histogram: Vec<(i64, u64)>,
    pub samples: Vec<f64>,
}

/// Binned fluctuation checks for each ℓ from stored σ samples.
pub fn fluctuation_checks(samples_per_ell: &[(usize, Vec<f64>)], bin_width: f64) -> Result<Vec<EllReport>> {
    if !(bin_width > 0.0) {
        return Err(invalid("bin width must be positive"));
    }
    samples_per_ell
        .iter()
        .map(|(ell, s)| {
            let mut st = SigmaStream::new(*ell, bin_width, s.len());
            for &x in s {
                st.push(x);
            }
            Ok(st.report())
        })
        .collect()
}

/// Weighted fit of `y = s·x` with weights `1/var`; returns `(s, se)`.
pub(crate) fn slope_through_origin(points: &[(f64, f64, f64)]) -> Option<(f64, f64)> {
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(x, y, var) in points {
        sxy += x * y / var;
        sxx += x * x / var;
    }
    (sxx > 0.0).then(|| (sxy / sxx, 1.0 / sxx.sqrt()))
}

/// Trace fluctuation-dissipation check: `lhs = tr⟨∇𝓛(θ)δθᵀ⟩` over records
/// `burn_in..`, `rhs = η⁻¹ tr D₀`.
pub fn fdt_trace_check(
    traj: &Trajectory,
    model: &ModelSpec,
    data: &Dataset,
    theta0: &[f64],
    eta: f64,
    d0: &Mat,
    burn_in: usize,
) -> Result<(f64, f64)> {
    let mut grad = vec![0.0; model.n_params()];
    let records = (burn_in..traj.len()).map(|k| traj.theta(k));
    fdt_trace_from(
        records,
        |th, g: &mut [f64]| {
            model.loss_grad_into(data, th, None, &mut grad);
            g.copy_from_slice(&grad);
        },
        theta0,
        eta,
        d0,
    )
}

/// Same check for any drift: `grad(θ, out)` writes `∇𝓛(θ)`.
pub fn fdt_trace_from<'a>(
    records: impl Iterator<Item = &'a [f64]>,
    mut grad: impl FnMut(&[f64], &mut [f64]),
    theta0: &[f64],
    eta: f64,
    d0: &Mat,
) -> Result<(f64, f64)> {
    let n = theta0.len();
    if d0.nrows() != n || d0.ncols() != n {
        return Err(invalid("D₀ does not match θ₀"));
    }
    let mut g = vec![0.0; n];
    let (mut sum, mut count) = (0.0, 0usize);
    for th in records {
        grad(th, &mut g);
        sum += g.iter().zip(th.iter().zip(theta0)).map(|(gi, (t, r))| gi * (t - r)).sum::<f64>();
        count += 1;
    }
    if count < MIN_SAMPLES {
        return Err(insufficient("fdt trace check", count));
    }
    Ok((sum / count as f64, d0.trace() / eta))
}

/// Everything measured from stationary trajectories, ready for JSON export.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FluctuationReport {
    pub records: u64,
    pub steps: u64,
    #[serde(with = "crate::io::vec_plain")]
    pub mu_emp: Vector,
    #[serde(with = "crate::io::mat_rows")]
    pub sigma_emp: Mat,
    /// Block-means standard errors of `sigma_emp`.
    #[serde(with = "crate::io::mat_rows")]
    pub sigma_se: Mat,
    #[serde(with = "crate::io::mat_rows")]
    pub area_rate_emp: Mat,
    #[serde(with = "crate::io::mat_rows")]
    pub area_rate_se: Mat,
    pub per_ell: Vec<EllReport>,
    pub fdt_trace: Option<(f64, f64)>,
}

impl FluctuationReport {
    pub fn write_json(&self, path: &std::path::Path) -> Result<()> {
        crate::io::write_json(path, self)
    }

    /// `ell,sigma,log_ratio,count_pos,count_neg` for every ℓ.
    pub fn write_dft_csv(&self, path: &std::path::Path) -> Result<()> {
        let rows: Vec<Vec<f64>> = self
            .per_ell
            .iter()
            .flat_map(|r| {
                r.dft_curve
                    .iter()
                    .map(move |p| vec![r.ell as f64, p.sigma, p.log_ratio, p.count_pos as f64, p.count_neg as f64])
            })
            .collect();
        crate::io::write_table(path, &["ell", "sigma", "log_ratio", "count_pos", "count_neg"], &rows)
    }

    /// `ell,bin_center,count` for every ℓ.
    pub fn write_histogram_csv(&self, path: &std::path::Path) -> Result<()> {
        let rows: Vec<Vec<f64>> = self
            .per_ell
            .iter()
            .flat_map(|r| r.histogram.iter().map(move |&(k, c)| vec![r.ell as f64, k as f64 * r.bin_width, c as f64]))
            .collect();
        crate::io::write_table(path, &["ell", "bin_center", "count"], &rows)
    }
}
