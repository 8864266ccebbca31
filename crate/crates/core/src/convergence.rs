//! Linear-rate check for gradient descent on a strongly convex quadratic.
//!
//! For `f` that is `mu`-strongly convex with `L`-Lipschitz gradient and a step
//! `eta < 2 / L`, the optimality gap contracts every step by at most
//! `1 - gamma` where `gamma = 2 * mu * (eta - L * eta^2 / 2)`.

use crate::nn::{sgd_step, ParamVector};
use crate::{Error, Result};

/// `f(x) = 0.5 * sum_i curvature_i * (x_i - center_i)^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    curvatures: Vec<f64>,
    center: Vec<f64>,
}

impl Quadratic {
    pub fn new(curvatures: Vec<f64>, center: Vec<f64>) -> Result<Self> {
        if curvatures.is_empty() || curvatures.len() != center.len() {
            return Err(Error::dim("center", curvatures.len(), center.len()));
        }
        if curvatures.iter().any(|c| !(*c > 0.0)) {
            return Err(Error::config("curvatures", "must be positive for strong convexity"));
        }
        Ok(Self { curvatures, center })
    }

    /// Strong convexity constant.
    pub fn mu(&self) -> f64 {
        self.curvatures.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Gradient Lipschitz constant.
    pub fn lipschitz(&self) -> f64 {
        self.curvatures.iter().cloned().fold(0.0, f64::max)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.curvatures
            .iter()
            .zip(&self.center)
            .zip(x)
            .map(|((c, m), xi)| 0.5 * c * (xi - m).powi(2))
            .sum()
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.curvatures
            .iter()
            .zip(&self.center)
            .zip(x)
            .map(|((c, m), xi)| c * (xi - m))
            .collect()
    }
}

/// `1 - 2 * mu * (eta - L * eta^2 / 2)`.
pub fn theoretical_rate(mu: f64, lipschitz: f64, eta: f64) -> f64 {
    1.0 - 2.0 * mu * (eta - lipschitz * eta * eta / 2.0)
}

/// Runs `steps` gradient-descent steps from `start` and returns the ratio
/// `gap[t + 1] / gap[t]` of successive optimality gaps.
pub fn contraction_factors(problem: &Quadratic, start: &[f64], eta: f64, steps: usize) -> Result<Vec<f64>> {
    if eta >= 2.0 / problem.lipschitz() {
        return Err(Error::config("eta", "step size must be below 2 / L"));
    }
    let mut x = ParamVector::new("quadratic", start.to_vec());
    let mut gap = problem.value(x.values());
    let mut factors = Vec::with_capacity(steps);
    for _ in 0..steps {
        let grad = ParamVector::new("quadratic", problem.gradient(x.values()));
        x = sgd_step(&x, &grad, eta)?;
        let next = problem.value(x.values());
        if gap <= 0.0 {
            break;
        }
        factors.push(next / gap);
        gap = next;
    }
    Ok(factors)
}
