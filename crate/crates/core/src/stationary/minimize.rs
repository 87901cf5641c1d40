//! Damped Newton minimization of 𝓛, n𝓛 or the WOR landscape 𝓛̂ = n𝓛 + δ𝓛.

use serde::{Deserialize, Serialize};

use crate::diffusion::effective_loss_perturbation;
use crate::error::{Error, Result};
use crate::linalg::{sym_eigen, Mat, Vector};
use crate::models::{Dataset, ModelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Landscape {
    Plain,
    /// `n𝓛`; same minimizer as `Plain`.
    Scaled { n: f64 },
    /// `n𝓛 + δ𝓛` for learning rate `eta` and batch size `m`.
    Wor { eta: f64, m: usize },
}

const MAX_ITERATIONS: usize = 500;

impl Landscape {
    fn scale(&self, m_total: usize) -> f64 {
        match *self {
            Landscape::Plain => 1.0,
            Landscape::Scaled { n } => n,
            Landscape::Wor { m, .. } => (m_total / m) as f64,
        }
    }

    pub fn value(&self, model: &ModelSpec, data: &Dataset, theta: &[f64]) -> Result<f64> {
        let base = self.scale(data.len()) * model.loss(data, theta);
        Ok(match *self {
            Landscape::Wor { eta, m } => base + effective_loss_perturbation(model, data, theta, eta, m, false)?.delta,
            _ => base,
        })
    }

    pub fn gradient(&self, model: &ModelSpec, data: &Dataset, theta: &[f64]) -> Result<Vector> {
        let base = model.gradient(data, theta) * self.scale(data.len());
        Ok(match *self {
            Landscape::Wor { eta, m } => {
                base + effective_loss_perturbation(model, data, theta, eta, m, true)?.gradient.expect("requested")
            }
            _ => base,
        })
    }

    /// Hessian of the landscape. For `Wor` the `δ𝓛` part is differentiated
    /// numerically from its analytic gradient when N is small, and dropped
    /// (leaving `nH`) otherwise.
    pub fn hessian(&self, model: &ModelSpec, data: &Dataset, theta: &[f64]) -> Result<Mat> {
        let h = model.second_order(data, theta, false)?.h * self.scale(data.len());
        match *self {
            Landscape::Wor { eta, m } if model.n_params() <= 64 => {
                let hd = crate::models::fd_hessian_of(
                    |t| {
                        effective_loss_perturbation(model, data, t, eta, m, true)
                            .ok()
                            .and_then(|e| e.gradient)
                            .unwrap_or_else(|| Vector::from_element(t.len(), f64::NAN))
                    },
                    theta,
                    1e-5,
                );
                Ok(h + hd)
            }
            _ => Ok(h),
        }
    }
}

/// Newton direction with Levenberg damping until the system is positive definite.
fn newton_direction(h: &Mat, g: &Vector) -> Vector {
    let (vals, vecs) = sym_eigen(h);
    let top = vals.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    let floor = 1e-10 * top;
    let coeffs = vecs.transpose() * g;
    let scaled = Vector::from_iterator(vals.len(), (0..vals.len()).map(|k| -coeffs[k] / vals[k].abs().max(floor)));
    vecs * scaled
}

/// Minimizer of the landscape starting at `theta_init`.
///
/// Stops once `‖∇‖∞ ≤ 1e-10·max(1, |value|)`. The Hessian used for the step
/// is `scale·H` plus, for `Wor`, a finite-difference Hessian of `δ𝓛`, with
/// negative curvature reflected so every step is a descent direction.
pub fn find_minimum(model: &ModelSpec, data: &Dataset, theta_init: &[f64], landscape: Landscape) -> Result<Vector> {
    model.check(data, theta_init)?;
    let mut theta = Vector::from_column_slice(theta_init);
    let mut value = landscape.value(model, data, theta.as_slice())?;
    let mut grad = landscape.gradient(model, data, theta.as_slice())?;
    for _ in 0..MAX_ITERATIONS {
        if grad.amax() <= 1e-10 * value.abs().max(1.0) {
            return Ok(theta);
        }
        let h = landscape.hessian(model, data, theta.as_slice())?;
        let mut dir = newton_direction(&h, &grad);
        if dir.dot(&grad) >= 0.0 {
            dir = -&grad;
        }
        let slope = dir.dot(&grad);
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial = &theta + &dir * step;
            let v = landscape.value(model, data, trial.as_slice())?;
            if v.is_finite() && v <= value + 1e-4 * step * slope {
                theta = trial;
                value = v;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // Close to the minimum the value is flat to rounding; take the full
            // Newton step when it reduces the gradient instead.
            let trial = &theta + &dir;
            let g = landscape.gradient(model, data, trial.as_slice())?;
            if g.amax() < grad.amax() {
                theta = trial;
                value = landscape.value(model, data, theta.as_slice())?;
                grad = g;
                continue;
            }
            break;
        }
        grad = landscape.gradient(model, data, theta.as_slice())?;
    }
    if grad.amax() <= 1e-10 * value.abs().max(1.0) {
        return Ok(theta);
    }
    Err(Error::NoMinimum { iterations: MAX_ITERATIONS, grad_norm: grad.amax() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{design_matrix, gen_regression_dataset};

    pub(crate) const REGRESSION_START: [f64; 7] = [1.0, 1.0, 0.5, -0.5, 1.0, -1.0, 0.0];

    #[test]
    fn linearized_minimum_in_closed_form() {
        let data = gen_regression_dataset(200, 0.1, 1).unwrap();
        let model = ModelSpec::linearized_regression(0.1, 10.0);
        let psi = design_matrix(&data);
        let y = Vector::from_iterator(200, (0..200).map(|i| data.output(i)[0]));
        let h = &psi * psi.transpose() / 0.01 + Mat::identity(3, 3) * 20.0;
        let want = h.clone().try_inverse().unwrap() * (&psi * y) / 0.01;
        let got = find_minimum(&model, &data, &[0.0; 3], Landscape::Plain).unwrap();
        assert!((&got - &want).norm() <= 1e-10 * want.norm());
    }

    #[test]
    fn scaled_landscape_has_same_minimizer() {
        let data = gen_regression_dataset(200, 0.1, 1).unwrap();
        let model = ModelSpec::nonlinear_regression(0.1, 10.0);
        let a = find_minimum(&model, &data, &REGRESSION_START, Landscape::Plain).unwrap();
        let b = find_minimum(&model, &data, &REGRESSION_START, Landscape::Scaled { n: 20.0 }).unwrap();
        assert!((&a - &b).norm() <= 1e-8 * a.norm());
    }

    #[test]
    fn wor_minimum_shifts_by_order_eta() {
        let data = gen_regression_dataset(200, 0.1, 1).unwrap();
        let model = ModelSpec::nonlinear_regression(0.1, 10.0);
        let plain = find_minimum(&model, &data, &REGRESSION_START, Landscape::Plain).unwrap();
        let s1 = (find_minimum(&model, &data, plain.as_slice(), Landscape::Wor { eta: 1e-7, m: 10 }).unwrap() - &plain).norm();
        let s2 = (find_minimum(&model, &data, plain.as_slice(), Landscape::Wor { eta: 2e-7, m: 10 }).unwrap() - &plain).norm();
        assert!(s1 > 0.0);
        assert!((s2 / s1 - 2.0).abs() < 0.05, "shift ratio {}", s2 / s1);
    }
}
