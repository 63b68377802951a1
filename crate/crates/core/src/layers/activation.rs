use super::Param;
use crate::error::{Error, Result};
use crate::tensor::{Float, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
}

#[inline]
fn sigmoid<T: Float>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn activation<T: Float>(x: &Tensor<T>, kind: Activation) -> Tensor<T> {
    match kind {
        Activation::Relu => x.map(|v| v.max(T::zero())),
        Activation::Sigmoid => x.map(sigmoid),
    }
}

#[derive(Debug, Clone, Default)]
pub struct Relu<T: Float> {
    cache: Option<Tensor<T>>,
}

impl<T: Float> Relu<T> {
    pub fn forward_train(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = activation(x, Activation::Relu);
        self.cache = Some(y.clone());
        Ok(y)
    }

    pub fn fingerprint(&self) -> Option<u64> {
        let y = self.cache.as_ref()?;
        Some(super::fingerprint_bits(y.data().iter().map(|&v| (v > T::zero()) as u64)))
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self.cache.take().ok_or_else(|| Error::NoCache("relu".into()))?;
        dy.zip_map(&y, |g, out| if out > T::zero() { g } else { T::zero() })
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        Vec::new()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        Vec::new()
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}

#[derive(Debug, Clone, Default)]
pub struct Sigmoid<T: Float> {
    cache: Option<Tensor<T>>,
}

impl<T: Float> Sigmoid<T> {
    pub fn forward_train(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = activation(x, Activation::Sigmoid);
        self.cache = Some(y.clone());
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self.cache.take().ok_or_else(|| Error::NoCache("sigmoid".into()))?;
        dy.zip_map(&y, |g, p| g * p * (T::one() - p))
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        Vec::new()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        Vec::new()
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}
