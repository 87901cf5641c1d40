//! Discrete Ornstein-Uhlenbeck generator with exactly known statistics.
//!
//! `θ' = θ − ηH(θ − θ₀) + ξ`, `⟨ξξᵀ⟩ = 2D`: the linear-drift, constant-noise
//! limit of every engine, used as an independent oracle for the estimators.

use rand_distr::{Distribution, StandardNormal};

use crate::engines::TrajectorySink;
use crate::error::{invalid, Result};
use crate::linalg::{sym_eigen, symmetrize, Mat, Vector};

#[derive(Debug, Clone)]
pub struct OuProcess {
    pub h: Mat,
    pub d: Mat,
    pub eta: f64,
    pub theta0: Vector,
}

impl OuProcess {
    pub fn new(h: Mat, d: Mat, eta: f64, theta0: Vector) -> Result<Self> {
        let n = theta0.len();
        if h.shape() != (n, n) || d.shape() != (n, n) {
            return Err(invalid("H, D and θ₀ sizes differ"));
        }
        Ok(Self { h, d: symmetrize(&d), eta, theta0 })
    }

    /// Exact stationary covariance of the discrete chain, `Σ = AΣAᵀ + 2D` with `A = I − ηH`.
    pub fn discrete_covariance(&self) -> Result<Mat> {
        let (h, o) = sym_eigen(&symmetrize(&self.h));
        let a: Vec<f64> = h.iter().map(|x| 1.0 - self.eta * x).collect();
        if a.iter().any(|x| x.abs() >= 1.0) {
            return Err(invalid("discrete OU chain is not stable"));
        }
        let dt = o.transpose() * &self.d * &o;
        let n = h.len();
        let s = Mat::from_fn(n, n, |i, j| 2.0 * dt[(i, j)] / (1.0 - a[i] * a[j]));
        Ok(symmetrize(&(&o * s * o.transpose())))
    }

    /// Exact mean area per step of the discrete chain.
    pub fn discrete_area_rate(&self) -> Result<Mat> {
        let s = self.discrete_covariance()?;
        Ok((&self.h * &s - &s * &self.h) * (0.5 * self.eta))
    }

    fn noise_factor(&self) -> Mat {
        let (l, o) = sym_eigen(&self.d);
        let sq = Mat::from_diagonal(&l.map(|x| (2.0 * x.max(0.0)).sqrt()));
        &o * sq * o.transpose()
    }
}

/// Runs `steps` updates from `start`, recording every state.
pub fn simulate_ou<R: rand::Rng + ?Sized, S: TrajectorySink>(
    p: &OuProcess,
    start: &[f64],
    steps: u64,
    rng: &mut R,
    sink: &mut S,
) -> Vec<f64> {
    let n = p.theta0.len();
    let l = p.noise_factor();
    let drift = &p.h * p.eta;
    let mut th = Vector::from_column_slice(start);
    let mut z = Vector::zeros(n);
    sink.record(0, th.as_slice());
    for step in 1..=steps {
        for zi in z.iter_mut() {
            *zi = StandardNormal.sample(rng);
        }
        let d = &th - &p.theta0;
        th -= &drift * d;
        th += &l * &z;
        sink.record(step, th.as_slice());
    }
    th.as_slice().to_vec()
}
