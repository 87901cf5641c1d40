//! First-order perturbation `δ𝓛` of the epoch-level WOR landscape `𝓛̂ = n𝓛 + δ𝓛`.

use super::check_wor;
use crate::error::Result;
use crate::linalg::Vector;
use crate::models::{fd_gradient, Dataset, ModelSpec};

#[derive(Debug, Clone)]
pub struct EffectiveLoss {
    pub delta: f64,
    pub gradient: Option<Vector>,
}

/// `δ𝓛 = −(ηn(n−1)/4)[|∇𝓛|² + |∇L|²/(M−1) − M/(M−1) tr VVᵀ]` and, on request,
/// its analytic gradient `−(ηn(n−1)/4)[2H∇𝓛 + 2H_L∇L/(M−1) − 2M/(M−1) Σ_i U_i V_i]`.
///
/// Per-sample Hessians enter only through Hessian-vector products, so the
/// gradient never needs the N×N×M tensor.
pub fn effective_loss_perturbation(
    model: &ModelSpec,
    data: &Dataset,
    theta: &[f64],
    eta: f64,
    m: usize,
    want_gradient: bool,
) -> Result<EffectiveLoss> {
    model.check(data, theta)?;
    let m_total = data.len();
    check_wor(m, m_total)?;
    let n_par = model.n_params();
    if m == m_total {
        return Ok(EffectiveLoss { delta: 0.0, gradient: want_gradient.then(|| Vector::zeros(n_par)) });
    }
    let nb = (m_total / m) as f64;
    let mf = m_total as f64;
    let inv_m = 1.0 / mf;
    let pre = -eta * nb * (nb - 1.0) / 4.0;

    let mut vi = vec![0.0; n_par];
    let mut grad_l = vec![0.0; n_par];
    let mut tr_vv = 0.0;
    let mut sum_uv = vec![0.0; n_par];
    for i in 0..m_total {
        vi.iter_mut().for_each(|v| *v = 0.0);
        model.sample_grad(data, theta, i, inv_m, &mut vi);
        tr_vv += vi.iter().map(|v| v * v).sum::<f64>();
        for (g, v) in grad_l.iter_mut().zip(&vi) {
            *g += v;
        }
        if want_gradient {
            model.sample_hvp(data, theta, i, &vi, inv_m, &mut sum_uv);
        }
    }
    let grad_l = Vector::from_vec(grad_l);
    let x = Vector::from_iterator(n_par, theta.iter().map(|t| 2.0 * model.lambda * t));
    let grad_full = &grad_l + &x;
    let delta = pre * (grad_full.norm_squared() + grad_l.norm_squared() / (mf - 1.0) - mf / (mf - 1.0) * tr_vv);

    let gradient = want_gradient.then(|| {
        let mut h_gf = &grad_full * (2.0 * model.lambda);
        let mut hl_gl = Vector::zeros(n_par);
        for i in 0..m_total {
            model.sample_hvp(data, theta, i, grad_full.as_slice(), inv_m, h_gf.as_mut_slice());
            model.sample_hvp(data, theta, i, grad_l.as_slice(), inv_m, hl_gl.as_mut_slice());
        }
        let suv = Vector::from_vec(sum_uv);
        (h_gf * 2.0 + hl_gl * (2.0 / (mf - 1.0)) - suv * (2.0 * mf / (mf - 1.0))) * pre
    });
    Ok(EffectiveLoss { delta, gradient })
}

/// Central finite differences of `δ𝓛`; the fallback when Hessian-vector
/// products are not wanted, and the oracle for the analytic gradient.
pub fn effective_loss_gradient_fd(model: &ModelSpec, data: &Dataset, theta: &[f64], eta: f64, m: usize) -> Result<Vector> {
    effective_loss_perturbation(model, data, theta, eta, m, false)?;
    Ok(fd_gradient(
        |t| effective_loss_perturbation(model, data, t, eta, m, false).map(|e| e.delta).unwrap_or(f64::NAN),
        theta,
        1e-5,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::gen_regression_dataset;

    #[test]
    fn single_batch_epoch_has_no_perturbation() {
        let data = gen_regression_dataset(20, 0.1, 1).unwrap();
        let model = ModelSpec::linearized_regression(0.1, 10.0);
        let e = effective_loss_perturbation(&model, &data, &[0.1, 0.2, 0.3], 1e-3, 20, true).unwrap();
        assert_eq!(e.delta, 0.0);
        assert_eq!(e.gradient.unwrap().norm(), 0.0);
    }

    #[test]
    fn analytic_gradient_matches_fd() {
        let data = gen_regression_dataset(40, 0.1, 2).unwrap();
        for model in [ModelSpec::linearized_regression(0.1, 10.0), ModelSpec::nonlinear_regression(0.1, 10.0)] {
            let theta: Vec<f64> = (0..model.n_params()).map(|k| 0.4 - 0.15 * k as f64).collect();
            let a = effective_loss_perturbation(&model, &data, &theta, 1e-4, 4, true).unwrap().gradient.unwrap();
            let f = effective_loss_gradient_fd(&model, &data, &theta, 1e-4, 4).unwrap();
            assert!((&a - &f).norm() <= 1e-5 * a.norm(), "{:?}: {} vs {}", model.kind, a, f);
        }
    }

    #[test]
    fn matches_v_matrix_formula() {
        let data = gen_regression_dataset(30, 0.1, 3).unwrap();
        let model = ModelSpec::nonlinear_regression(0.1, 5.0);
        let theta = [1.0, 1.1, 0.5, -0.5, 0.8, -0.8, 0.1];
        let b = model.evaluate(&data, &theta, None).unwrap();
        let (eta, m) = (1e-3, 3);
        let (n, mf) = (10.0, 30.0);
        let gl = b.grad_data();
        let want = -eta * n * (n - 1.0) / 4.0
            * (b.grad.norm_squared() + gl.norm_squared() / (mf - 1.0) - mf / (mf - 1.0) * (&b.v * b.v.transpose()).trace());
        let got = effective_loss_perturbation(&model, &data, &theta, eta, m, false).unwrap().delta;
        assert!((got - want).abs() <= 1e-12 * want.abs());
    }

    #[test]
    fn invariant_under_dataset_permutation() {
        let data = gen_regression_dataset(30, 0.1, 4).unwrap();
        let order: Vec<usize> = (0..30).rev().collect();
        let shuffled = data.subset(&order).unwrap();
        let model = ModelSpec::nonlinear_regression(0.1, 5.0);
        let theta = [1.0, 1.1, 0.5, -0.5, 0.8, -0.8, 0.1];
        let a = effective_loss_perturbation(&model, &data, &theta, 1e-3, 3, false).unwrap().delta;
        let b = effective_loss_perturbation(&model, &shuffled, &theta, 1e-3, 3, false).unwrap().delta;
        assert!((a - b).abs() <= 1e-12 * a.abs());
    }
}
