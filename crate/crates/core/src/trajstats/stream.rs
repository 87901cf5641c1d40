//! One-pass accumulators that can be merged across ensemble runs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{slope_through_origin, DftPoint, EllReport, FluctuationReport, MIN_BIN_COUNT};
use crate::engines::TrajectorySink;
use crate::error::{invalid, Result};
use crate::linalg::{CompensatedSum, Mat, Vector};
use crate::stationary::StationaryTheory;

/// Running mean of a vector quantity with block-means standard errors.
#[derive(Debug, Clone)]
pub struct BlockMeans {
    dim: usize,
    block_len: u64,
    cur: Vec<f64>,
    cur_n: u64,
    blocks: u64,
    block_sum: Vec<f64>,
    block_sq: Vec<f64>,
    total: Vec<f64>,
    count: u64,
}

impl BlockMeans {
    pub fn new(dim: usize, block_len: u64) -> Self {
        Self {
            dim,
            block_len: block_len.max(1),
            cur: vec![0.0; dim],
            cur_n: 0,
            blocks: 0,
            block_sum: vec![0.0; dim],
            block_sq: vec![0.0; dim],
            total: vec![0.0; dim],
            count: 0,
        }
    }

    /// Adds one observation whose `j`-th component is `value(j)`.
    #[inline]
    pub fn push_with(&mut self, value: impl Fn(usize) -> f64) {
        for (j, c) in self.cur.iter_mut().enumerate() {
            *c += value(j);
        }
        self.cur_n += 1;
        self.count += 1;
        if self.cur_n == self.block_len {
            let inv = 1.0 / self.cur_n as f64;
            for j in 0..self.dim {
                let mean = self.cur[j] * inv;
                self.total[j] += self.cur[j];
                self.block_sum[j] += mean;
                self.block_sq[j] += mean * mean;
                self.cur[j] = 0.0;
            }
            self.cur_n = 0;
            self.blocks += 1;
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn blocks(&self) -> u64 {
        self.blocks
    }

    /// Mean over every observation, including the unfinished block.
    pub fn mean(&self) -> Vec<f64> {
        let inv = if self.count == 0 { 0.0 } else { 1.0 / self.count as f64 };
        self.total.iter().zip(&self.cur).map(|(t, c)| (t + c) * inv).collect()
    }

    /// Standard error from complete blocks; NaN with fewer than two.
    pub fn std_error(&self) -> Vec<f64> {
        if self.blocks < 2 {
            return vec![f64::NAN; self.dim];
        }
        let b = self.blocks as f64;
        self.block_sum
            .iter()
            .zip(&self.block_sq)
            .map(|(s, q)| {
                let mean = s / b;
                ((q / b - mean * mean).max(0.0) * b / (b - 1.0) / b).sqrt()
            })
            .collect()
    }

    /// Folds in another accumulator; its unfinished block joins the totals only.
    pub fn merge(&mut self, other: &Self) {
        assert_eq!(self.dim, other.dim, "merging block means of different sizes");
        for j in 0..self.dim {
            self.total[j] += other.total[j] + other.cur[j];
            self.block_sum[j] += other.block_sum[j];
            self.block_sq[j] += other.block_sq[j];
        }
        self.blocks += other.blocks;
        self.count += other.count;
    }
}

/// Entropy production over contiguous non-overlapping windows of ℓ steps.
#[derive(Debug, Clone)]
pub struct SigmaStream {
    ell: usize,
    width: f64,
    keep: usize,
    acc: f64,
    in_window: usize,
    count: u64,
    sum: CompensatedSum,
    sum_sq: CompensatedSum,
    exp_sum: CompensatedSum,
    exp_sq: CompensatedSum,
    hist: BTreeMap<i64, u64>,
    samples: Vec<f64>,
}

impl SigmaStream {
    pub fn new(ell: usize, width: f64, keep: usize) -> Self {
        Self {
            ell: ell.max(1),
            width,
            keep,
            acc: 0.0,
            in_window: 0,
            count: 0,
            sum: CompensatedSum::default(),
            sum_sq: CompensatedSum::default(),
            exp_sum: CompensatedSum::default(),
            exp_sq: CompensatedSum::default(),
            hist: BTreeMap::new(),
            samples: Vec::new(),
        }
    }

    /// Adds one step's contribution; closes the window after ℓ of them.
    #[inline]
    pub fn step(&mut self, sigma_k: f64) {
        self.acc += sigma_k;
        self.in_window += 1;
        if self.in_window == self.ell {
            let s = self.acc;
            self.acc = 0.0;
            self.in_window = 0;
            self.push(s);
        }
    }

    /// Drops a partially filled window, e.g. when the trajectory is cut.
    pub fn reset_window(&mut self) {
        self.acc = 0.0;
        self.in_window = 0;
    }

    /// Adds one complete window value.
    pub fn push(&mut self, sigma: f64) {
        self.count += 1;
        self.sum.add(sigma);
        self.sum_sq.add(sigma * sigma);
        let e = (-sigma).exp();
        self.exp_sum.add(e);
        self.exp_sq.add(e * e);
        *self.hist.entry((sigma / self.width).round() as i64).or_default() += 1;
        if self.samples.len() < self.keep {
            self.samples.push(sigma);
        }
    }

    pub fn merge(&mut self, other: &Self) {
        assert!(self.ell == other.ell && self.width == other.width, "merging incompatible σ streams");
        self.count += other.count;
        for (a, b) in [
            (&mut self.sum, &other.sum),
            (&mut self.sum_sq, &other.sum_sq),
            (&mut self.exp_sum, &other.exp_sum),
            (&mut self.exp_sq, &other.exp_sq),
        ] {
            a.add(b.value());
        }
        for (k, c) in &other.hist {
            *self.hist.entry(*k).or_default() += c;
        }
        let room = self.keep.saturating_sub(self.samples.len());
        self.samples.extend(other.samples.iter().take(room));
    }

    pub fn report(&self) -> EllReport {
        let n = self.count as f64;
        let mean_se = |s: &CompensatedSum, q: &CompensatedSum| {
            if self.count == 0 {
                return (f64::NAN, f64::NAN);
            }
            let mean = s.value() / n;
            let var = if self.count > 1 { (q.value() / n - mean * mean).max(0.0) * n / (n - 1.0) } else { f64::NAN };
            (mean, (var / n).sqrt())
        };
        let (mean_sigma, mean_sigma_se) = mean_se(&self.sum, &self.sum_sq);
        let (ift, ift_se) = mean_se(&self.exp_sum, &self.exp_sq);
        let mut dft_curve = Vec::new();
        let mut excluded_bins = Vec::new();
        let kmax = self.hist.keys().map(|k| k.abs()).max().unwrap_or(0);
        for k in 1..=kmax {
            let pos = self.hist.get(&k).copied().unwrap_or(0);
            let neg = self.hist.get(&-k).copied().unwrap_or(0);
            if pos >= MIN_BIN_COUNT && neg >= MIN_BIN_COUNT {
                dft_curve.push(DftPoint {
                    sigma: k as f64 * self.width,
                    log_ratio: (neg as f64 / pos as f64).ln(),
                    count_pos: pos,
                    count_neg: neg,
                });
            } else if pos + neg > 0 {
                excluded_bins.push(k as f64 * self.width);
            }
        }
        let pts: Vec<(f64, f64, f64)> = dft_curve
            .iter()
            .map(|p| (p.sigma, p.log_ratio, 1.0 / p.count_pos as f64 + 1.0 / p.count_neg as f64))
            .collect();
        let fit = slope_through_origin(&pts);
        EllReport {
            ell: self.ell,
            count: self.count,
            mean_sigma,
            mean_sigma_se,
            ift,
            ift_se,
            bin_width: self.width,
            dft_curve,
            dft_slope: fit.map(|f| f.0),
            dft_slope_se: fit.map(|f| f.1),
            excluded_bins,
            histogram: self.hist.iter().map(|(k, c)| (*k, *c)).collect(),
            samples: self.samples.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzerConfig {
    /// Records before this step are ignored.
    pub burn_in_step: u64,
    /// Window lengths ℓ for entropy production; empty disables it.
    pub ells: Vec<usize>,
    /// Histogram bin width per ℓ.
    pub bin_widths: Vec<f64>,
    /// Records per block for standard errors.
    pub block_len: u64,
    /// σ samples kept per ℓ for export.
    pub keep_samples: usize,
}

impl AnalyzerConfig {
    /// Bin widths of a fifth of the predicted σ spread `√(2ℓ·rate)`.
    pub fn with_theory_bins(burn_in_step: u64, ells: Vec<usize>, entropy_rate: f64, block_len: u64) -> Self {
        let bin_widths = ells
            .iter()
            .map(|&l| {
                let sd = (2.0 * l as f64 * entropy_rate).sqrt();
                if sd > 0.0 && sd.is_finite() { sd / 5.0 } else { 1.0 }
            })
            .collect();
        Self { burn_in_step, ells, bin_widths, block_len, keep_samples: 10_000 }
    }
}

/// Streams moments, area and entropy production around `θ₀`.
#[derive(Debug, Clone)]
pub struct StationaryAnalyzer {
    n: usize,
    burn_in_step: u64,
    theta0: Vec<f64>,
    kernel: Option<Vec<f64>>,
    prev: Vec<f64>,
    prev_step: Option<u64>,
    delta: Vec<f64>,
    step_vec: Vec<f64>,
    kstep: Vec<f64>,
    first: BlockMeans,
    second: BlockMeans,
    area: BlockMeans,
    streams: Vec<SigmaStream>,
    steps: u64,
}

impl StationaryAnalyzer {
    /// `kernel` is `K = Σ⁻¹CD₀⁻¹`; required when `cfg.ells` is non-empty.
    pub fn new(theta0: &[f64], kernel: Option<&Mat>, cfg: &AnalyzerConfig) -> Result<Self> {
        let n = theta0.len();
        if cfg.ells.len() != cfg.bin_widths.len() {
            return Err(invalid("one bin width per ℓ is required"));
        }
        if cfg.ells.contains(&0) || cfg.bin_widths.iter().any(|w| !(*w > 0.0)) {
            return Err(invalid("ℓ and bin widths must be positive"));
        }
        if !cfg.ells.is_empty() && kernel.is_none() {
            return Err(invalid("entropy production needs the theory kernel"));
        }
        if let Some(k) = kernel {
            if k.shape() != (n, n) {
                return Err(invalid("entropy kernel does not match θ₀"));
            }
        }
        Ok(Self {
            n,
            burn_in_step: cfg.burn_in_step,
            theta0: theta0.to_vec(),
            kernel: kernel.map(|k| k.transpose().as_slice().to_vec()), // row-major
            prev: vec![0.0; n],
            prev_step: None,
            delta: vec![0.0; n],
            step_vec: vec![0.0; n],
            kstep: vec![0.0; n],
            first: BlockMeans::new(n, cfg.block_len),
            second: BlockMeans::new(n * n, cfg.block_len),
            area: BlockMeans::new(n * n, cfg.block_len),
            streams: cfg.ells.iter().zip(&cfg.bin_widths).map(|(&l, &w)| SigmaStream::new(l, w, cfg.keep_samples)).collect(),
            steps: 0,
        })
    }

    pub fn from_theory(theory: &StationaryTheory, cfg: &AnalyzerConfig) -> Result<Self> {
        let k = (!cfg.ells.is_empty()).then(|| theory.entropy_kernel());
        Self::new(theory.theta0.as_slice(), k.as_ref(), cfg)
    }

    /// Forgets the previous record so the next run starts fresh windows.
    pub fn cut(&mut self) {
        self.prev_step = None;
        for s in &mut self.streams {
            s.reset_window();
        }
    }

    pub fn merge(&mut self, other: &Self) {
        self.first.merge(&other.first);
        self.second.merge(&other.second);
        self.area.merge(&other.area);
        for (a, b) in self.streams.iter_mut().zip(&other.streams) {
            a.merge(b);
        }
        self.steps += other.steps;
    }

    pub fn records(&self) -> u64 {
        self.first.count()
    }

    pub fn report(&self, fdt_trace: Option<(f64, f64)>) -> FluctuationReport {
        let n = self.n;
        let mat = |v: Vec<f64>| Mat::from_row_slice(n, n, &v);
        let sym = |m: Mat| (&m + m.transpose()) * 0.5;
        let anti = |m: Mat| (&m - m.transpose()) * 0.5;
        FluctuationReport {
            records: self.records(),
            steps: self.steps,
            mu_emp: Vector::from_vec(self.first.mean()),
            sigma_emp: sym(mat(self.second.mean())),
            sigma_se: mat(self.second.std_error()),
            area_rate_emp: anti(mat(self.area.mean())),
            area_rate_se: mat(self.area.std_error()),
            per_ell: self.streams.iter().map(SigmaStream::report).collect(),
            fdt_trace,
        }
    }
}

impl TrajectorySink for StationaryAnalyzer {
    fn record(&mut self, step: u64, theta: &[f64]) {
        if step < self.burn_in_step {
            return;
        }
        let n = self.n;
        for j in 0..n {
            self.delta[j] = theta[j] - self.theta0[j];
        }
        let d = &self.delta;
        self.first.push_with(|j| d[j]);
        self.second.push_with(|j| d[j / n] * d[j % n]);
        if let Some(ps) = self.prev_step {
            let ds = step.saturating_sub(ps).max(1);
            let inv = 1.0 / ds as f64;
            for j in 0..n {
                self.step_vec[j] = theta[j] - self.prev[j];
                // Reuse `prev` as the left-point displacement.
                self.prev[j] -= self.theta0[j];
            }
            let (p, s) = (&self.prev, &self.step_vec);
            self.area.push_with(|j| {
                let (a, g) = (j / n, j % n);
                0.5 * (p[a] * s[g] - p[g] * s[a]) * inv
            });
            if let Some(k) = &self.kernel {
                for a in 0..n {
                    let row = &k[a * n..(a + 1) * n];
                    self.kstep[a] = row.iter().zip(s).map(|(x, y)| x * y).sum();
                }
                let sigma_k: f64 = p.iter().zip(&self.kstep).map(|(x, y)| x * y).sum();
                for st in &mut self.streams {
                    st.step(sigma_k);
                }
            }
            self.steps += ds;
        }
        self.prev.copy_from_slice(theta);
        self.prev_step = Some(step);
    }
}
