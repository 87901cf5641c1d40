//! Theory-versus-measurement comparisons and the tolerances they use.

use serde::Serialize;

use crate::linalg::{max_abs, Mat};
use crate::trajstats::FluctuationReport;

/// Tolerances applied by the experiment runner and the acceptance suite.
pub mod tol {
    /// Elements below this fraction of the largest one are not compared.
    pub const DOMINANCE: f64 = 1e-3;
    pub const SIGMA_REL: f64 = 0.15;
    pub const AREA_REL: f64 = 0.15;
    pub const IFT_ABS: f64 = 0.01;
    pub const DFT_SLOPE_ABS: f64 = 0.1;
    pub const ENTROPY_RATE_REL: f64 = 0.10;
    /// Earthquake circulation must vanish within this many standard errors.
    pub const ZERO_AREA_SE: f64 = 3.0;
    pub const EARTHQUAKE_SIGMA_REL: f64 = 0.10;
    pub const PEARSON_MIN: f64 = 0.95;
    pub const ORACLE_REL: f64 = 1e-12;
    pub const FD_GRAD_REL: f64 = 1e-6;
    pub const FD_HESS_REL: f64 = 1e-4;
}

/// One matrix element compared against theory.
#[derive(Debug, Clone, Serialize)]
pub struct ElementDiff {
    pub i: usize,
    pub j: usize,
    pub theory: f64,
    pub measured: f64,
    pub se: f64,
    pub rel: f64,
}

fn lower(n: usize, diag: bool) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| (0..=i).filter(move |&j| diag || j < i).map(move |j| (i, j)))
}

/// Relative differences on the lower triangle, restricted to elements with
/// `|theory| ≥ DOMINANCE·max|theory|`.
pub fn dominant_diffs(theory: &Mat, measured: &Mat, se: &Mat, diag: bool) -> Vec<ElementDiff> {
    let cut = tol::DOMINANCE * max_abs(theory);
    lower(theory.nrows(), diag)
        .filter(|&(i, j)| theory[(i, j)].abs() >= cut && cut > 0.0)
        .map(|(i, j)| {
            let (t, m) = (theory[(i, j)], measured[(i, j)]);
            ElementDiff { i, j, theory: t, measured: m, se: se[(i, j)], rel: (m - t).abs() / t.abs() }
        })
        .collect()
}

pub fn worst_rel(diffs: &[ElementDiff]) -> f64 {
    diffs.iter().fold(0.0, |a, d| a.max(d.rel))
}

/// Pearson correlation between lower-triangle elements of two matrices.
pub fn pearson(a: &Mat, b: &Mat, diag: bool) -> f64 {
    let pairs: Vec<(f64, f64)> = lower(a.nrows(), diag).map(|(i, j)| (a[(i, j)], b[(i, j)])).collect();
    let n = pairs.len() as f64;
    let (ma, mb) = pairs.iter().fold((0.0, 0.0), |(x, y), p| (x + p.0 / n, y + p.1 / n));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in &pairs {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

/// Largest `|C_emp|/se` over the strict lower triangle.
pub fn max_area_z(report: &FluctuationReport) -> f64 {
    lower(report.area_rate_emp.nrows(), false)
        .map(|(i, j)| report.area_rate_emp[(i, j)].abs() / report.area_rate_se[(i, j)])
        .fold(0.0, f64::max)
}

/// Per-ℓ fluctuation-theorem summary.
#[derive(Debug, Clone, Serialize)]
pub struct EllCheck {
    pub ell: usize,
    pub windows: u64,
    pub rate: f64,
    pub rate_se: f64,
    pub rate_rel: f64,
    pub ift: f64,
    pub dft_slope: Option<f64>,
    pub dft_slope_se: Option<f64>,
    pub pass: bool,
}

pub fn ell_checks(report: &FluctuationReport, theory_rate: f64) -> Vec<EllCheck> {
    report
        .per_ell
        .iter()
        .map(|e| {
            let l = e.ell as f64;
            let rate = e.mean_sigma / l;
            let rate_rel = (rate - theory_rate).abs() / theory_rate.abs();
            let pass = (e.ift - 1.0).abs() <= tol::IFT_ABS
                && e.dft_slope.is_some_and(|s| (s + 1.0).abs() <= tol::DFT_SLOPE_ABS)
                && rate_rel <= tol::ENTROPY_RATE_REL;
            EllCheck {
                ell: e.ell,
                windows: e.count,
                rate,
                rate_se: e.mean_sigma_se / l,
                rate_rel,
                ift: e.ift,
                dft_slope: e.dft_slope,
                dft_slope_se: e.dft_slope_se,
                pass,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dominance_filter_and_worst() {
        let t = Mat::from_row_slice(2, 2, &[1.0, 1e-5, 1e-5, 2.0]);
        let m = Mat::from_row_slice(2, 2, &[1.1, 5.0, 5.0, 2.0]);
        let d = dominant_diffs(&t, &m, &Mat::zeros(2, 2), true);
        assert_eq!(d.len(), 2);
        assert!((worst_rel(&d) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn pearson_of_affine_copy_is_one() {
        let a = Mat::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 5.0, 7.0, 3.0, 7.0, 11.0]);
        let b = &a * 3.0 + Mat::from_element(3, 3, 1.0);
        assert!((pearson(&a, &b, true) - 1.0).abs() < 1e-12);
        assert!((pearson(&a, &(-&a), false) + 1.0).abs() < 1e-12);
    }
}
