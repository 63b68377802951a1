use crate::error::{Error, Result};
use crate::layers::Param;
use crate::tensor::{Float, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments per parameter tensor, plus the step count.
#[derive(Debug, Clone)]
pub struct AdamState<T: Float> {
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub t: u64,
}

impl<T: Float> AdamState<T> {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Param<T>>) -> Self {
        let m: Vec<Tensor<T>> = params.into_iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        Self { v: m.clone(), m, t: 0 }
    }
}

/// One bias-corrected Adam update from each parameter's `grad`.
pub fn adam_step<T: Float>(params: &mut [&mut Param<T>], state: &mut AdamState<T>, cfg: &AdamConfig) -> Result<()> {
    if params.len() != state.m.len() {
        return Err(Error::shape(format!(
            "{} parameters for an optimizer state of {}",
            params.len(),
            state.m.len()
        )));
    }
    for (p, m) in params.iter().zip(&state.m) {
        if p.value.shape() != m.shape() || p.grad.shape() != m.shape() {
            return Err(Error::shape(format!(
                "parameter `{}` {:?} (grad {:?}) vs moment {:?}",
                p.name,
                p.value.shape(),
                p.grad.shape(),
                m.shape()
            )));
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let (c1, c2) = (1.0 - b1.powi(t), 1.0 - b2.powi(t));
    for ((p, m), v) in params.iter_mut().zip(&mut state.m).zip(&mut state.v) {
        let Param { value, grad, .. } = &mut **p;
        for (((w, &g), m), v) in value
            .data_mut()
            .iter_mut()
            .zip(grad.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            let g = g.to_f64();
            let m1 = b1 * m.to_f64() + (1.0 - b1) * g;
            let v1 = b2 * v.to_f64() + (1.0 - b2) * g * g;
            *m = T::from_f64(m1);
            *v = T::from_f64(v1);
            let step = cfg.learning_rate * (m1 / c1) / ((v1 / c2).sqrt() + cfg.eps);
            *w = T::from_f64(w.to_f64() - step);
        }
    }
    Ok(())
}
