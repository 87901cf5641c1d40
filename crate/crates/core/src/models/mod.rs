//! The three concrete networks and their exact loss derivatives.
//!
//! Losses are `𝓛 = L + R` with `L = M⁻¹ Σ_i ℓ_i` and `R = λ|θ|²`.
//! Regression models use `ℓ_i = M/(2ε²) (y_i − f(x_i; θ))²`; the linear
//! classifier uses `ℓ_i = |y_i − W x_i|²`.

mod dataset;
pub mod mnist;

use serde::{Deserialize, Serialize};

pub use dataset::{gen_regression_dataset, Dataset};
pub use mnist::load_mnist;

use crate::error::{invalid, Error, Result};
use crate::linalg::{Mat, Vector};

/// Default cap on `N·N·M` entries for materializing per-sample Hessians.
pub const DEFAULT_U_BUDGET: usize = 20_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// `f = θ5 tanh(θ1 x + θ3) + θ6 tanh(θ2 x + θ4) + θ7`, seven parameters.
    NonlinearRegression,
    /// `f = θᵀψ(x)` with `ψ = (tanh(½ − x), tanh(½ + x), 1)`.
    LinearizedRegression,
    /// `f = W x`, `W` is `d_out × d_in`, flattened row-major into θ.
    LinearClassifier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub d_in: usize,
    pub d_out: usize,
    pub epsilon: f64,
    pub lambda: f64,
    pub u_budget: usize,
}

/// Loss and first derivatives at one θ.
#[derive(Debug, Clone)]
pub struct DerivativeBundle {
    pub loss: f64,
    pub grad: Vector,
    /// `V_{αi} = M⁻¹ ∂_α ℓ_i`, always over the full dataset.
    pub v: Mat,
    /// `∂_α R`.
    pub x: Vector,
    /// `∂_β ∂_α R`.
    pub y: Mat,
}

impl DerivativeBundle {
    /// `∇L = V·𝟙`.
    pub fn grad_data(&self) -> Vector {
        self.v.column_sum()
    }
}

#[derive(Debug, Clone)]
pub struct SecondOrderBundle {
    pub h: Mat,
    /// `U_{βαi} = M⁻¹ ∂_β ∂_α ℓ_i`, one N×N matrix per sample.
    pub u: Option<Vec<Mat>>,
}

/// ψ(x) of the linearized model.
pub fn psi(x: f64) -> [f64; 3] {
    [(0.5 - x).tanh(), (0.5 + x).tanh(), 1.0]
}

/// The 3×M matrix Ψ with columns ψ(x_i).
pub fn design_matrix(data: &Dataset) -> Mat {
    Mat::from_fn(3, data.len(), |a, i| psi(data.input(i)[0])[a])
}

impl ModelSpec {
    pub fn nonlinear_regression(epsilon: f64, lambda: f64) -> Self {
        Self { kind: ModelKind::NonlinearRegression, d_in: 1, d_out: 1, epsilon, lambda, u_budget: DEFAULT_U_BUDGET }
    }

    pub fn linearized_regression(epsilon: f64, lambda: f64) -> Self {
        Self { kind: ModelKind::LinearizedRegression, d_in: 1, d_out: 1, epsilon, lambda, u_budget: DEFAULT_U_BUDGET }
    }

    pub fn linear_classifier(d_in: usize, d_out: usize, lambda: f64) -> Self {
        Self { kind: ModelKind::LinearClassifier, d_in, d_out, epsilon: 1.0, lambda, u_budget: DEFAULT_U_BUDGET }
    }

    pub fn n_params(&self) -> usize {
        match self.kind {
            ModelKind::NonlinearRegression => 7,
            ModelKind::LinearizedRegression => 3,
            ModelKind::LinearClassifier => self.d_in * self.d_out,
        }
    }

    /// Whether the per-sample Hessian tensor fits the storage budget for `m_samples`.
    pub fn per_sample_hessian_capable(&self, m_samples: usize) -> bool {
        let n = self.n_params();
        n.saturating_mul(n).saturating_mul(m_samples) <= self.u_budget
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) {
            return Err(invalid("λ must be non-negative"));
        }
        if !(self.epsilon > 0.0) {
            return Err(invalid("ε must be positive"));
        }
        if self.d_in == 0 || self.d_out == 0 {
            return Err(invalid("model dimensions must be positive"));
        }
        Ok(())
    }

    pub fn check(&self, data: &Dataset, theta: &[f64]) -> Result<()> {
        self.validate()?;
        if data.d_in() != self.d_in || data.d_out() != self.d_out {
            return Err(invalid(format!(
                "model expects {}→{} data, dataset is {}→{}",
                self.d_in,
                self.d_out,
                data.d_in(),
                data.d_out()
            )));
        }
        if theta.len() != self.n_params() {
            return Err(invalid(format!("θ has length {}, model needs {}", theta.len(), self.n_params())));
        }
        Ok(())
    }

    fn reg_prefactor(&self, m_total: usize) -> f64 {
        m_total as f64 / (2.0 * self.epsilon * self.epsilon)
    }

    /// Output `f` and `∂f/∂θ` of a scalar-output model.
    #[inline]
    fn scalar_output(&self, x: f64, theta: &[f64], df: &mut [f64; 7]) -> f64 {
        match self.kind {
            ModelKind::NonlinearRegression => {
                let t1 = (theta[0] * x + theta[2]).tanh();
                let t2 = (theta[1] * x + theta[3]).tanh();
                let s1 = 1.0 - t1 * t1;
                let s2 = 1.0 - t2 * t2;
                *df = [theta[4] * s1 * x, theta[5] * s2 * x, theta[4] * s1, theta[5] * s2, t1, t2, 1.0];
                theta[4] * t1 + theta[5] * t2 + theta[6]
            }
            ModelKind::LinearizedRegression => {
                let p = psi(x);
                df[..3].copy_from_slice(&p);
                theta[0] * p[0] + theta[1] * p[1] + theta[2]
            }
            ModelKind::LinearClassifier => unreachable!("classifier has vector output"),
        }
    }

    /// Adds `scale·∂_α ℓ_i` to `out` and returns `ℓ_i`.
    #[inline]
    pub fn sample_grad(&self, data: &Dataset, theta: &[f64], i: usize, scale: f64, out: &mut [f64]) -> f64 {
        match self.kind {
            ModelKind::LinearClassifier => {
                let x = data.input(i);
                let y = data.output(i);
                let mut loss = 0.0;
                for r in 0..self.d_out {
                    let row = &theta[r * self.d_in..(r + 1) * self.d_in];
                    let wx: f64 = row.iter().zip(x).map(|(w, xc)| w * xc).sum();
                    let res = y[r] - wx;
                    loss += res * res;
                    let coef = -2.0 * res * scale;
                    for (o, xc) in out[r * self.d_in..(r + 1) * self.d_in].iter_mut().zip(x) {
                        *o += coef * xc;
                    }
                }
                loss
            }
            _ => {
                let mut df = [0.0; 7];
                let f = self.scalar_output(data.input(i)[0], theta, &mut df);
                let res = data.output(i)[0] - f;
                let pre = self.reg_prefactor(data.len());
                let coef = -2.0 * pre * res * scale;
                for (o, d) in out.iter_mut().zip(&df) {
                    *o += coef * d;
                }
                pre * res * res
            }
        }
    }

    /// `∂_β ∂_α ℓ_i` (not divided by M).
    pub fn sample_hessian(&self, data: &Dataset, theta: &[f64], i: usize) -> Mat {
        let n = self.n_params();
        match self.kind {
            ModelKind::LinearClassifier => {
                let x = data.input(i);
                let mut h = Mat::zeros(n, n);
                for r in 0..self.d_out {
                    for c in 0..self.d_in {
                        for c2 in 0..self.d_in {
                            h[(r * self.d_in + c, r * self.d_in + c2)] = 2.0 * x[c] * x[c2];
                        }
                    }
                }
                h
            }
            _ => {
                let x = data.input(i)[0];
                let mut df = [0.0; 7];
                let f = self.scalar_output(x, theta, &mut df);
                let res = data.output(i)[0] - f;
                let pre2 = 2.0 * self.reg_prefactor(data.len());
                let mut h = Mat::from_fn(n, n, |a, b| pre2 * df[a] * df[b]);
                if self.kind == ModelKind::NonlinearRegression {
                    for (win, bias, wout) in [(0usize, 2usize, 4usize), (1, 3, 5)] {
                        let t = (theta[win] * x + theta[bias]).tanh();
                        let s = 1.0 - t * t;
                        let curv = theta[wout] * (-2.0 * t * s);
                        let mut put = |a: usize, b: usize, v: f64| {
                            h[(a, b)] -= pre2 * res * v;
                            if a != b {
                                h[(b, a)] -= pre2 * res * v;
                            }
                        };
                        put(win, win, curv * x * x);
                        put(win, bias, curv * x);
                        put(bias, bias, curv);
                        put(win, wout, s * x);
                        put(bias, wout, s);
                    }
                }
                h
            }
        }
    }

    /// Adds `scale·(∂²ℓ_i)·v` to `out` without forming the matrix.
    pub fn sample_hvp(&self, data: &Dataset, theta: &[f64], i: usize, v: &[f64], scale: f64, out: &mut [f64]) {
        match self.kind {
            ModelKind::LinearClassifier => {
                let x = data.input(i);
                for r in 0..self.d_out {
                    let rv = &v[r * self.d_in..(r + 1) * self.d_in];
                    let vx: f64 = rv.iter().zip(x).map(|(a, b)| a * b).sum();
                    for (o, xc) in out[r * self.d_in..(r + 1) * self.d_in].iter_mut().zip(x) {
                        *o += scale * 2.0 * vx * xc;
                    }
                }
            }
            _ => {
                let h = self.sample_hessian(data, theta, i);
                for a in 0..h.nrows() {
                    let mut acc = 0.0;
                    for b in 0..h.ncols() {
                        acc += h[(a, b)] * v[b];
                    }
                    out[a] += scale * acc;
                }
            }
        }
    }

    /// Loss and gradient of `L + R` (full) or `L_B + R` (batch, `L_B = m⁻¹Σ_{i∈B} ℓ_i`).
    /// Allocation-free hot path for the engines; no validation.
    pub fn loss_grad_into(&self, data: &Dataset, theta: &[f64], batch: Option<&[usize]>, grad: &mut [f64]) -> f64 {
        for (g, t) in grad.iter_mut().zip(theta) {
            *g = 2.0 * self.lambda * t;
        }
        let reg: f64 = self.lambda * theta.iter().map(|t| t * t).sum::<f64>();
        let mut data_loss = 0.0;
        match batch {
            None => {
                let w = 1.0 / data.len() as f64;
                for i in 0..data.len() {
                    data_loss += self.sample_grad(data, theta, i, w, grad);
                }
                data_loss * w + reg
            }
            Some(b) => {
                let w = 1.0 / b.len() as f64;
                for &i in b {
                    data_loss += self.sample_grad(data, theta, i, w, grad);
                }
                data_loss * w + reg
            }
        }
    }

    /// Full loss `𝓛(θ)` only.
    pub fn loss(&self, data: &Dataset, theta: &[f64]) -> f64 {
        let mut scratch = vec![0.0; self.n_params()];
        self.loss_grad_into(data, theta, None, &mut scratch)
    }

    pub fn gradient(&self, data: &Dataset, theta: &[f64]) -> Vector {
        let mut g = vec![0.0; self.n_params()];
        self.loss_grad_into(data, theta, None, &mut g);
        Vector::from_vec(g)
    }

    /// Loss, gradient (full or batch form), full-data `V`, and regularizer derivatives.
    pub fn evaluate(&self, data: &Dataset, theta: &[f64], batch: Option<&[usize]>) -> Result<DerivativeBundle> {
        self.check(data, theta)?;
        if let Some(b) = batch {
            check_batch(b, data.len())?;
        }
        let n = self.n_params();
        let m_total = data.len();
        let mut grad = vec![0.0; n];
        let loss = self.loss_grad_into(data, theta, batch, &mut grad);
        let mut v = Mat::zeros(n, m_total);
        let mut col = vec![0.0; n];
        for i in 0..m_total {
            col.iter_mut().for_each(|c| *c = 0.0);
            self.sample_grad(data, theta, i, 1.0 / m_total as f64, &mut col);
            v.column_mut(i).copy_from_slice(&col);
        }
        Ok(DerivativeBundle {
            loss,
            grad: Vector::from_vec(grad),
            v,
            x: Vector::from_iterator(n, theta.iter().map(|t| 2.0 * self.lambda * t)),
            y: self.reg_hessian(),
        })
    }

    pub fn reg_hessian(&self) -> Mat {
        let n = self.n_params();
        Mat::identity(n, n) * (2.0 * self.lambda)
    }

    /// Hessian `H` of `𝓛` and, when requested and affordable, per-sample `U`.
    pub fn second_order(&self, data: &Dataset, theta: &[f64], want_u: bool) -> Result<SecondOrderBundle> {
        self.check(data, theta)?;
        let m_total = data.len();
        if want_u && !self.per_sample_hessian_capable(m_total) {
            return Err(Error::Capability(format!(
                "per-sample Hessians need {}×{}×{} entries, over the budget of {}",
                self.n_params(),
                self.n_params(),
                m_total,
                self.u_budget
            )));
        }
        let inv_m = 1.0 / m_total as f64;
        let mut h = self.reg_hessian();
        let u = if want_u {
            let us: Vec<Mat> = (0..m_total).map(|i| self.sample_hessian(data, theta, i) * inv_m).collect();
            for ui in &us {
                h += ui;
            }
            Some(us)
        } else {
            match self.kind {
                ModelKind::LinearClassifier => {
                    // H is block diagonal: one copy of (2/M) Σ x xᵀ per output row.
                    let mut g = Mat::zeros(self.d_in, self.d_in);
                    for i in 0..m_total {
                        let x = nalgebra::DVectorView::from_slice(data.input(i), self.d_in);
                        g.ger(2.0 * inv_m, &x, &x, 1.0);
                    }
                    for r in 0..self.d_out {
                        let o = r * self.d_in;
                        let mut block = h.view_mut((o, o), (self.d_in, self.d_in));
                        block += &g;
                    }
                }
                _ => {
                    for i in 0..m_total {
                        h += self.sample_hessian(data, theta, i) * inv_m;
                    }
                }
            }
            None
        };
        Ok(SecondOrderBundle { h: crate::linalg::symmetrize(&h), u })
    }
}

pub(crate) fn check_batch(batch: &[usize], m_total: usize) -> Result<()> {
    if batch.is_empty() {
        return Err(invalid("empty batch"));
    }
    let mut seen = vec![false; m_total];
    for &i in batch {
        if i >= m_total {
            return Err(invalid(format!("batch index {i} out of range 0..{m_total}")));
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(invalid(format!("duplicate batch index {i}")));
        }
    }
    Ok(())
}

/// Central-difference gradient of a scalar function, step `h_rel·max(1,|θ_α|)`.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, theta: &[f64], h_rel: f64) -> Vector {
    let mut t = theta.to_vec();
    Vector::from_iterator(
        theta.len(),
        (0..theta.len()).map(|a| {
            let h = h_rel * theta[a].abs().max(1.0);
            t[a] = theta[a] + h;
            let fp = f(&t);
            t[a] = theta[a] - h;
            let fm = f(&t);
            t[a] = theta[a];
            (fp - fm) / (2.0 * h)
        }),
    )
}

/// Central-difference Jacobian of a gradient, symmetrized.
pub fn fd_hessian_of(grad: impl Fn(&[f64]) -> Vector, theta: &[f64], h_rel: f64) -> Mat {
    let n = theta.len();
    let mut t = theta.to_vec();
    let mut h = Mat::zeros(n, n);
    for a in 0..n {
        let step = h_rel * theta[a].abs().max(1.0);
        t[a] = theta[a] + step;
        let gp = grad(&t);
        t[a] = theta[a] - step;
        let gm = grad(&t);
        t[a] = theta[a];
        h.set_column(a, &((gp - gm) / (2.0 * step)));
    }
    crate::linalg::symmetrize(&h)
}

/// Finite-difference Hessian of `𝓛` from the analytic gradient, step `1e-5·max(1,|θ_α|)`.
pub fn fd_hessian(model: &ModelSpec, data: &Dataset, theta: &[f64]) -> Mat {
    fd_hessian_of(|t| model.gradient(data, t), theta, 1e-5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::rel_diff;
    use proptest::prelude::*;

    fn regression() -> Dataset {
        gen_regression_dataset(40, 0.1, 3).unwrap()
    }

    fn tiny_classifier_data() -> Dataset {
        let inputs = vec![vec![0.2, -0.5, 1.0], vec![0.7, 0.1, -0.3], vec![-1.0, 0.4, 0.6], vec![0.3, 0.3, 0.3]];
        let outputs = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![0.0, 1.0]];
        Dataset::new(inputs, outputs).unwrap()
    }

    fn models() -> Vec<(ModelSpec, Dataset)> {
        vec![
            (ModelSpec::nonlinear_regression(0.1, 10.0), regression()),
            (ModelSpec::linearized_regression(0.1, 10.0), regression()),
            (ModelSpec::linear_classifier(3, 2, 0.5), tiny_classifier_data()),
        ]
    }

    #[test]
    fn zero_weights_give_half_sum_of_squares() {
        let data = regression();
        let want: f64 = (0..data.len()).map(|i| data.output(i)[0].powi(2)).sum::<f64>() / (2.0 * 0.01);
        for m in [ModelSpec::nonlinear_regression(0.1, 10.0), ModelSpec::linearized_regression(0.1, 10.0)] {
            let theta = vec![0.0; m.n_params()];
            let got = m.loss(&data, &theta);
            assert!((got - want).abs() < 1e-10 * want, "{:?}: {got} vs {want}", m.kind);
        }
    }

    #[test]
    fn linearized_v_matches_closed_form() {
        let data = regression();
        let m = ModelSpec::linearized_regression(0.1, 10.0);
        let theta = [0.3, -0.2, 0.1];
        let b = m.evaluate(&data, &theta, None).unwrap();
        for i in 0..data.len() {
            let p = psi(data.input(i)[0]);
            let r = data.output(i)[0] - (theta[0] * p[0] + theta[1] * p[1] + theta[2]);
            for a in 0..3 {
                let want = -(1.0 / 0.01) * r * p[a];
                assert!((b.v[(a, i)] - want).abs() <= 1e-12 * want.abs().max(1.0));
            }
        }
    }

    #[test]
    fn linearized_hessian_closed_form() {
        let data = regression();
        let m = ModelSpec::linearized_regression(0.1, 10.0);
        let psi_m = design_matrix(&data);
        let want = &psi_m * psi_m.transpose() / 0.01 + Mat::identity(3, 3) * 20.0;
        let h = m.second_order(&data, &[0.5, 0.1, -0.4], false).unwrap().h;
        assert!(rel_diff(&h, &want) < 1e-13);
        // Gauss-Newton part is PSD: H − 2λI ⪰ 0.
        assert!(crate::linalg::min_eigenvalue(&(h - Mat::identity(3, 3) * 20.0)) > -1e-9);
    }

    #[test]
    fn classifier_block_hessian_equals_per_sample_sum() {
        let data = tiny_classifier_data();
        let m = ModelSpec::linear_classifier(3, 2, 0.5);
        let theta: Vec<f64> = (0..6).map(|k| 0.1 * k as f64).collect();
        let fast = m.second_order(&data, &theta, false).unwrap().h;
        let full = m.second_order(&data, &theta, true).unwrap().h;
        assert!(rel_diff(&fast, &full) < 1e-14);
    }

    #[test]
    fn u_over_budget_is_capability_error() {
        let data = regression();
        let mut m = ModelSpec::nonlinear_regression(0.1, 10.0);
        m.u_budget = 10;
        assert!(matches!(m.second_order(&data, &[0.0; 7], true), Err(Error::Capability(_))));
    }

    #[test]
    fn batch_validation() {
        let data = regression();
        let m = ModelSpec::linearized_regression(0.1, 1.0);
        assert!(matches!(m.evaluate(&data, &[0.0; 3], Some(&[1, 1])), Err(Error::InvalidArgument(_))));
        assert!(matches!(m.evaluate(&data, &[0.0; 3], Some(&[400])), Err(Error::InvalidArgument(_))));
        assert!(matches!(m.evaluate(&data, &[0.0; 2], None), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn full_batch_equals_full_gradient() {
        let data = regression();
        let m = ModelSpec::nonlinear_regression(0.1, 10.0);
        let theta = [1.1, 1.2, 0.6, -0.6, 0.9, -0.9, 0.0];
        let all: Vec<usize> = (0..data.len()).collect();
        let a = m.evaluate(&data, &theta, None).unwrap();
        let b = m.evaluate(&data, &theta, Some(&all)).unwrap();
        assert!((a.loss - b.loss).abs() <= 1e-12 * a.loss);
        assert!((a.grad.clone() - b.grad).norm() <= 1e-12 * a.grad.norm());
    }

    #[test]
    fn batch_gradient_is_scaled_v_sum() {
        let data = regression();
        let m = ModelSpec::nonlinear_regression(0.1, 10.0);
        let theta = [1.1, 1.2, 0.6, -0.6, 0.9, -0.9, 0.0];
        let batch = [3usize, 17, 22, 5];
        let b = m.evaluate(&data, &theta, Some(&batch)).unwrap();
        let scale = data.len() as f64 / batch.len() as f64;
        let mut want = b.x.clone();
        for &i in &batch {
            want += b.v.column(i) * scale;
        }
        assert!((b.grad - want).norm() < 1e-10);
    }

    #[test]
    fn nonlinear_analytic_hessian_matches_fd() {
        let data = regression();
        let m = ModelSpec::nonlinear_regression(0.1, 10.0);
        let theta = [1.19, 1.2, 0.62, -0.62, 0.91, -0.91, -0.03];
        let so = m.second_order(&data, &theta, true).unwrap();
        let fd = fd_hessian(&m, &data, &theta);
        assert!(rel_diff(&fd, &so.h) < 1e-5, "{}", rel_diff(&fd, &so.h));
        assert_eq!(so.h, so.h.transpose());
    }

    #[test]
    fn hvp_matches_materialized_hessian() {
        for (m, data) in models() {
            let n = m.n_params();
            let theta: Vec<f64> = (0..n).map(|k| 0.3 - 0.1 * k as f64).collect();
            let v: Vec<f64> = (0..n).map(|k| (k as f64 * 0.7).sin()).collect();
            for i in 0..data.len().min(5) {
                let mut out = vec![0.0; n];
                m.sample_hvp(&data, &theta, i, &v, 1.0, &mut out);
                let want = m.sample_hessian(&data, &theta, i) * Vector::from_column_slice(&v);
                assert!((Vector::from_vec(out) - &want).norm() <= 1e-12 * want.norm().max(1.0));
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn gradient_matches_fd(seed in 0u64..1000, scale in 0.1f64..1.5) {
            for (m, data) in models() {
                let n = m.n_params();
                let theta: Vec<f64> = (0..n).map(|k| scale * ((k as f64 + 1.0) * (seed as f64 + 0.5)).sin()).collect();
                let g = m.gradient(&data, &theta);
                let fd = fd_gradient(|t| m.loss(&data, t), &theta, 1e-6);
                prop_assert!((g.clone() - &fd).norm() <= 1e-6 * g.norm().max(1.0), "{:?}", m.kind);
            }
        }

        #[test]
        fn grad_is_v_sum_plus_x(seed in 0u64..1000) {
            for (m, data) in models() {
                let n = m.n_params();
                let theta: Vec<f64> = (0..n).map(|k| ((k as f64 + 2.0) * (seed as f64 + 0.1)).cos()).collect();
                let b = m.evaluate(&data, &theta, None).unwrap();
                let gl = b.grad_data();
                let resid = (&b.grad - &b.x - &gl).norm();
                prop_assert!(resid <= 1e-10 * gl.norm().max(1e-300));
            }
        }

        #[test]
        fn hessian_is_u_sum_plus_y(seed in 0u64..1000) {
            for (m, data) in models() {
                let n = m.n_params();
                let theta: Vec<f64> = (0..n).map(|k| 0.5 * ((k as f64 + 3.0) * (seed as f64 + 0.2)).sin()).collect();
                let so = m.second_order(&data, &theta, true).unwrap();
                let mut sum = m.reg_hessian();
                for u in so.u.as_ref().unwrap() { sum += u; }
                prop_assert!(rel_diff(&sum, &so.h) < 1e-12);
            }
        }
    }
}
