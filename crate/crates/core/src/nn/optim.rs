use serde::{Deserialize, Serialize};

use super::ParamVector;
use crate::{Error, Result};

fn check_step(params: &ParamVector, grad: &ParamVector, lr: f64) -> Result<()> {
    if params.len() != grad.len() {
        return Err(Error::dim("gradient", params.len(), grad.len()));
    }
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::config("learning_rate", format!("must be positive, got {lr}")));
    }
    Ok(())
}

/// Plain gradient descent: `params - lr * grad`.
pub fn sgd_step(params: &ParamVector, grad: &ParamVector, lr: f64) -> Result<ParamVector> {
    check_step(params, grad, lr)?;
    let mut next = params.clone();
    for (p, g) in next.values_mut().iter_mut().zip(grad.values()) {
        *p -= lr * g;
    }
    Ok(next)
}

/// First and second moment estimates carried between Adam steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(state: &mut AdamState, params: &mut ParamVector, grad: &ParamVector, lr: f64) -> Result<()> {
    check_step(params, grad, lr)?;
    if state.m.len() != params.len() {
        return Err(Error::dim("optimizer_state", params.len(), state.m.len()));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    for (((p, &g), m), v) in params
        .values_mut()
        .iter_mut()
        .zip(grad.values())
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}
