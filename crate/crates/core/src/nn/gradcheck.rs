//! Central finite-difference gradient checking.
//!
//! Used by the test suites to validate every hand-written backward pass
//! against a derivative estimated from forward evaluations only.

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;

/// Estimate df/dx elementwise via central differences: the closure is called
/// with x perturbed by +/- epsilon at one position at a time. The closure
/// should compute its scalar reduction in f64 to keep the difference quotient
/// well conditioned.
pub fn numerical_gradient<F>(mut f: F, x: &Tensor, epsilon: f32) -> Result<Tensor>
where
    F: FnMut(&Tensor) -> Result<f64>,
{
    if !(epsilon > 0.0) {
        return Err(Error::InvalidInput(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let mut grad = Tensor::zeros(x.shape());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + epsilon;
        let f_plus = f(&probe)?;
        probe.data_mut()[i] = orig - epsilon;
        let f_minus = f(&probe)?;
        probe.data_mut()[i] = orig;
        grad.data_mut()[i] = ((f_plus - f_minus) / (2.0 * epsilon as f64)) as f32;
    }
    Ok(grad)
}

/// Worst-case discrepancy between two gradient tensors, relative for entries
/// above unit magnitude and absolute below it.
pub fn max_rel_error(analytic: &Tensor, numeric: &Tensor) -> Result<f32> {
    if analytic.shape() != numeric.shape() {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", analytic.shape()),
            actual: format!("{:?}", numeric.shape()),
        });
    }
    let mut worst = 0.0f32;
    for (a, n) in analytic.data().iter().zip(numeric.data()) {
        let denom = 1.0f32.max(a.abs()).max(n.abs());
        worst = worst.max((a - n).abs() / denom);
    }
    Ok(worst)
}
