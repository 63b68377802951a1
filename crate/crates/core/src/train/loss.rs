use crate::error::{Error, Result};
use crate::tensor::{Float, Tensor};

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before the log.
pub const PROB_CLAMP: f64 = 1e-7;

/// Mean binary cross-entropy over all `N·L` entries and its gradient with
/// respect to `probs`. The gradient is zero where the clamp is active.
pub fn bce_loss<T: Float>(probs: &Tensor<T>, targets: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    if probs.shape() != targets.shape() {
        return Err(Error::shape(format!(
            "probabilities {:?} vs targets {:?}",
            probs.shape(),
            targets.shape()
        )));
    }
    let count = probs.len() as f64;
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(probs.len());
    for (&p, &y) in probs.data().iter().zip(targets.data()) {
        let (p, y) = (p.to_f64(), y.to_f64());
        let pc = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        total -= y * pc.ln() + (1.0 - y) * (1.0 - pc).ln();
        let g = if pc == p { (pc - y) / (pc * (1.0 - pc)) / count } else { 0.0 };
        grad.push(T::from_f64(g));
    }
    Ok((total / count, Tensor::new(probs.shape(), grad)?))
}
