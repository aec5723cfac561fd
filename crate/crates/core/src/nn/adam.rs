use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;

/// Adam hyperparameters. Defaults are the standard lr 1e-3, beta1 0.9,
/// beta2 0.999, epsilon 1e-8.
#[derive(Clone, Copy, Debug)]
pub struct AdamParams {
    pub learning_rate: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub epsilon: f32,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::InvalidConfig(format!("{name} must be in [0, 1), got {b}")));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Per-tensor optimizer state: first and second moment estimates plus the
/// step counter used for bias correction.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub m: Tensor,
    pub v: Tensor,
    pub t: u64,
}

impl AdamState {
    pub fn new(shape: &[usize]) -> AdamState {
        AdamState {
            m: Tensor::zeros(shape),
            v: Tensor::zeros(shape),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(
    param: &mut Tensor,
    grad: &Tensor,
    state: &mut AdamState,
    hp: &AdamParams,
) -> Result<()> {
    if param.shape() != grad.shape() || param.shape() != state.m.shape() {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", param.shape()),
            actual: format!("grad {:?}, state {:?}", grad.shape(), state.m.shape()),
        });
    }
    state.t += 1;
    let b1 = hp.beta1;
    let b2 = hp.beta2;
    let bias1 = 1.0 - b1.powi(state.t.min(i32::MAX as u64) as i32);
    let bias2 = 1.0 - b2.powi(state.t.min(i32::MAX as u64) as i32);
    let lr = hp.learning_rate;
    let eps = hp.epsilon;
    let m = state.m.data_mut();
    let v = state.v.data_mut();
    let g = grad.data();
    for ((p, mi), (vi, gi)) in param
        .data_mut()
        .iter_mut()
        .zip(m.iter_mut())
        .zip(v.iter_mut().zip(g))
    {
        *mi = b1 * *mi + (1.0 - b1) * gi;
        *vi = b2 * *vi + (1.0 - b2) * gi * gi;
        let m_hat = *mi / bias1;
        let v_hat = *vi / bias2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}
