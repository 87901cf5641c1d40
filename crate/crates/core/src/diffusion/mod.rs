//! Minibatch-noise diffusion matrices.
//!
//! WR: one step's noise `ξ = η(∇L − ∇L_B)` has `D = ⟨ξξᵀ⟩/2` in closed form.
//! WOR: the epoch-to-epoch noise `ξ̂ = η²(Zζ + SΔχ)` is linear in the random
//! epoch statistics `ζ`, `χ`, so `D̂` follows from their second moments.

mod effective;
mod oracle;

use serde::{Deserialize, Serialize};

pub use effective::{effective_loss_gradient_fd, effective_loss_perturbation, EffectiveLoss};
pub use oracle::{oracle_wor_moments, oracle_wr, MomentClass, WorMomentReport};

use crate::error::{invalid, Error, Result};
use crate::linalg::{symmetrize, Mat, Vector};

/// Default cap on `N·M·M` entries for building the full `SΔ` tensor.
pub const DEFAULT_S_BUDGET: usize = 5_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WrVariant {
    Exact,
    /// `(η² n/2) VVᵀ`, valid for `M ≫ 1`, `n ≫ 1`.
    Approx,
}

fn check_sizes(m: usize, m_total: usize) -> Result<()> {
    if m == 0 || m > m_total {
        return Err(invalid(format!("batch size {m} must lie in 1..={m_total}")));
    }
    Ok(())
}

/// WR diffusion matrix from the per-sample gradient matrix `V` (N×M) and `∇L = V·𝟙`.
pub fn diffusion_wr(v: &Mat, grad_l: &Vector, eta: f64, m: usize, m_total: usize, variant: WrVariant) -> Result<Mat> {
    check_sizes(m, m_total)?;
    if v.ncols() != m_total || grad_l.len() != v.nrows() {
        return Err(invalid("V must be N×M and ∇L of length N"));
    }
    let n = v.nrows();
    if m == m_total {
        return Ok(Mat::zeros(n, n));
    }
    let nb = m_total as f64 / m as f64;
    let vvt = v * v.transpose();
    let d = match variant {
        WrVariant::Exact => {
            let pre = eta * eta * (nb - 1.0) / (2.0 * (m_total as f64 - 1.0));
            (vvt * m_total as f64 - grad_l * grad_l.transpose()) * pre
        }
        WrVariant::Approx => vvt * (eta * eta * nb / 2.0),
    };
    Ok(symmetrize(&d))
}

/// The six coefficients exactly as printed in the closed form for the WOR
/// noise moments. `a₅` there is only exact for `n = 2`; see [`WorMoments`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorCoefficients {
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub a4: f64,
    pub a5: f64,
}

fn check_wor(m: usize, m_total: usize) -> Result<()> {
    check_sizes(m, m_total)?;
    if !m_total.is_multiple_of(m) {
        return Err(invalid(format!("WOR needs M divisible by m (M={m_total}, m={m})")));
    }
    Ok(())
}

pub fn wor_coefficients(m: usize, m_total: usize) -> Result<WorCoefficients> {
    check_wor(m, m_total)?;
    let (mm, bm) = (m_total as f64, m as f64);
    let n = mm / bm;
    // a₂ and a₅ carry 1/(M−2); for M = 2 the structures they weight are empty.
    let (a2, a5) = if m_total == 2 {
        (0.0, 0.0)
    } else {
        (
            (mm - bm) * (mm * (mm - 4.0) + (mm - 4.0) * bm + 6.0) / (12.0 * (mm - 2.0) * (mm - 1.0).powi(2)),
            -(mm - bm) * (12.0 * mm + (mm - 4.0) * (mm * mm + (6.0 + mm) * bm))
                / (12.0 * (mm - 2.0) * (mm - 1.0).powi(2) * mm),
        )
    };
    Ok(WorCoefficients {
        a0: (mm - bm) * (mm + bm) / (12.0 * bm * bm),
        a1: (n + 1.0) * (mm - bm) / (12.0 * (mm - 1.0)),
        a2,
        a3: (mm - bm) * (mm + bm - 2.0) / (4.0 * (mm - 1.0).powi(2)),
        a4: -(mm - bm).powi(2) / (4.0 * (mm - 1.0).powi(2)),
        a5,
    })
}

/// Complete second-moment table of `ζ`, `χ` for one epoch.
///
/// Beyond the printed coefficients this carries the off-diagonal `⟨ζ_iζ_j⟩ = b₀`,
/// the all-distinct `⟨χ_ijχ_kl⟩ = a₆`, and the exact `a₅`. All three follow
/// from the sum rules `Σ_i ζ_i = 0` and `Σ_i χ_ij = Σ_j χ_ij`-type identities
/// (every datum is used once per epoch) and are confirmed by enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorMoments {
    pub a0: f64,
    pub b0: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub a4: f64,
    pub a5: f64,
    pub a6: f64,
}

impl WorMoments {
    pub fn exact(m: usize, m_total: usize) -> Result<Self> {
        let p = wor_coefficients(m, m_total)?;
        let mm = m_total as f64;
        let bm = m as f64;
        let b0 = if m_total > 1 { -p.a0 / (mm - 1.0) } else { 0.0 };
        let a5 = if m_total > 2 { -(bm * p.a1 + p.a4) / (mm - 2.0) } else { 0.0 };
        let a6 = if m_total > 3 { -(p.a2 + a5) / (mm - 3.0) } else { 0.0 };
        Ok(Self { a0: p.a0, b0, a1: p.a1, a2: p.a2, a3: p.a3, a4: p.a4, a5, a6 })
    }

    /// The printed closed form: `b₀ = a₆ = 0` and the printed `a₅`.
    pub fn printed(m: usize, m_total: usize) -> Result<Self> {
        let p = wor_coefficients(m, m_total)?;
        Ok(Self { a0: p.a0, b0: 0.0, a1: p.a1, a2: p.a2, a3: p.a3, a4: p.a4, a5: p.a5, a6: 0.0 })
    }
}

/// Matrices assembled from `V`, `U`, `X`, `Y` that the WOR diffusion is built from.
#[derive(Debug, Clone)]
pub struct WorBuildingBlocks {
    /// `Z_{αi} = n(YV)_{αi} − n(U_i X)_α`.
    pub z: Mat,
    /// `SΔ` as one N×M slice per first index: `s_delta[i][(α, j)] = SΔ_{αij}`.
    /// Present only when requested and within budget.
    pub s_delta: Option<Vec<Mat>>,
    /// `B_{αi} = Σ_j SΔ_{αji}`.
    pub b: Mat,
    /// `C_{αi} = Σ_j SΔ_{αij}`.
    pub c: Mat,
    /// `F = Σ_{i≠j} SΔ_{·ij} SΔ_{·ij}ᵀ`.
    pub f: Mat,
    /// `G = Σ_{i≠j} SΔ_{·ij} SΔ_{·ji}ᵀ`.
    pub g: Mat,
}

impl WorBuildingBlocks {
    /// `T = Σ_{ij} SΔ_{·ij} = B𝟙 = C𝟙`.
    pub fn total(&self) -> Vector {
        self.b.column_sum()
    }
}

/// Per-sample inputs for the WOR diffusion.
#[derive(Debug, Clone, Copy)]
pub struct WorInputs<'a> {
    pub v: &'a Mat,
    pub u: Option<&'a [Mat]>,
    pub x: &'a Vector,
    pub y: &'a Mat,
    /// Hessian of 𝓛, needed by the `Hdh` variant.
    pub h: Option<&'a Mat>,
}

pub fn wor_building_blocks(inp: &WorInputs, m: usize, with_s: bool) -> Result<WorBuildingBlocks> {
    let u = inp.u.ok_or_else(|| Error::Capability("WOR building blocks need per-sample Hessians U".into()))?;
    let (n_par, m_total) = inp.v.shape();
    if u.len() != m_total {
        return Err(invalid("U must hold one matrix per sample"));
    }
    check_wor(m, m_total)?;
    let nb = (m_total / m) as f64;
    let n2 = nb * nb;
    let n4 = n2 * n2;

    let z = {
        let mut z = inp.y * inp.v * nb;
        for (i, ui) in u.iter().enumerate() {
            let ux = ui * inp.x;
            z.column_mut(i).axpy(-nb, &ux, 1.0);
        }
        z
    };

    let grad_l = inp.v.column_sum();
    let mut hl = Mat::zeros(n_par, n_par);
    for ui in u {
        hl += ui;
    }
    let vvt = inp.v * inp.v.transpose();
    let mut b = Mat::zeros(n_par, m_total);
    let mut c = Mat::zeros(n_par, m_total);
    let mut f = Mat::zeros(n_par, n_par);
    for (i, ui) in u.iter().enumerate() {
        let vi = inp.v.column(i);
        let uivi = ui * vi;
        b.set_column(i, &((&hl * vi - &uivi) * n2));
        c.set_column(i, &((ui * (&grad_l - vi) ) * n2));
        let inner = &vvt - vi * vi.transpose();
        f += ui * inner * ui * n4;
    }

    // uv[i] = U_i V, so SΔ_{·ij} = n² uv[i][:, j] for i ≠ j.
    let uv: Vec<Mat> = u.iter().map(|ui| ui * inp.v).collect();
    let mut g = Mat::zeros(n_par, n_par);
    for i in 0..m_total {
        for j in 0..m_total {
            if i != j {
                g.ger(n4, &uv[i].column(j), &uv[j].column(i), 1.0);
            }
        }
    }
    let s_delta = with_s.then(|| {
        uv.into_iter()
            .enumerate()
            .map(|(i, mut s)| {
                s *= n2;
                s.column_mut(i).fill(0.0);
                s
            })
            .collect()
    });
    Ok(WorBuildingBlocks { z, s_delta, b, c, f: symmetrize(&f), g: symmetrize(&g) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WorVariant {
    /// Every term of the closed form with the printed coefficients.
    Full,
    /// `½η⁴ a₂ BBᵀ` only.
    Dominant,
    /// `(η² n³/12) H D H` with `D` the exact WR matrix.
    Hdh,
    /// Every term with the complete, enumeration-verified moment table.
    Exact,
}

/// WOR diffusion matrix.
pub fn diffusion_wor(inp: &WorInputs, eta: f64, m: usize, variant: WorVariant) -> Result<Mat> {
    let (n_par, m_total) = inp.v.shape();
    check_wor(m, m_total)?;
    if m == m_total {
        return Ok(Mat::zeros(n_par, n_par));
    }
    let eta4 = eta.powi(4);
    match variant {
        WorVariant::Hdh => {
            let h = inp.h.ok_or_else(|| Error::Capability("hdh variant needs the Hessian H".into()))?;
            let nb = (m_total / m) as f64;
            let d = diffusion_wr(inp.v, &inp.v.column_sum(), eta, m, m_total, WrVariant::Exact)?;
            Ok(symmetrize(&(h * d * h * (eta * eta * nb.powi(3) / 12.0))))
        }
        WorVariant::Dominant => {
            let k = wor_coefficients(m, m_total)?;
            let blocks = dominant_b(inp, m)?;
            Ok(symmetrize(&(&blocks * blocks.transpose() * (0.5 * eta4 * k.a2))))
        }
        WorVariant::Full | WorVariant::Exact => {
            let k = if variant == WorVariant::Full {
                WorMoments::printed(m, m_total)?
            } else {
                WorMoments::exact(m, m_total)?
            };
            let bb = wor_building_blocks(inp, m, false)?;
            Ok(assemble(&bb, &k, eta))
        }
    }
}

/// `½η⁴ Σ` over all moment structures.
pub fn assemble(bb: &WorBuildingBlocks, k: &WorMoments, eta: f64) -> Mat {
    let (z, b, c) = (&bb.z, &bb.b, &bb.c);
    let zt = z.transpose();
    let bt = b.transpose();
    let ct = c.transpose();
    let bmc = b - c;
    let zsum = z.column_sum();
    let t = bb.total();
    let bbt = b * &bt;
    let cct = c * &ct;
    let bct = b * &ct;
    let cbt = c * &bt;
    let mut acc = z * &zt * (k.a0 - k.b0) + &zsum * zsum.transpose() * k.b0;
    acc += (z * bmc.transpose() + &bmc * &zt) * k.a1;
    acc += (&bbt + &cct) * k.a2;
    acc += &bb.f * (k.a3 - 2.0 * k.a2);
    acc += &bb.g * (k.a4 - 2.0 * k.a5);
    acc += (&bct + &cbt) * k.a5;
    if k.a6 != 0.0 {
        acc += (&t * t.transpose() - &bbt - &cct - &bct - &cbt + &bb.f + &bb.g) * k.a6;
    }
    symmetrize(&(acc * (0.5 * eta.powi(4))))
}

/// `B` alone, O(M N²), without forming `SΔ`, `F` or `G`.
fn dominant_b(inp: &WorInputs, m: usize) -> Result<Mat> {
    let u = inp.u.ok_or_else(|| Error::Capability("dominant variant needs per-sample Hessians U".into()))?;
    let (n_par, m_total) = inp.v.shape();
    let n2 = ((m_total / m) as f64).powi(2);
    let mut hl = Mat::zeros(n_par, n_par);
    for ui in u {
        hl += ui;
    }
    let mut b = &hl * inp.v;
    for (i, ui) in u.iter().enumerate() {
        let uivi = ui * inp.v.column(i);
        b.column_mut(i).axpy(-1.0, &uivi, 1.0);
    }
    Ok(b * n2)
}

/// Pick the most detailed WOR variant the storage budget allows.
pub fn auto_wor_variant(n_params: usize, m_total: usize, budget: usize, preferred: WorVariant) -> WorVariant {
    let need = n_params.saturating_mul(m_total).saturating_mul(m_total);
    match preferred {
        WorVariant::Full | WorVariant::Exact | WorVariant::Dominant if need > budget => WorVariant::Hdh,
        v => v,
    }
}
