use super::Param;
use crate::error::{Error, Result};
use crate::tensor::{self, Float, Tensor};

#[derive(Debug, Clone, Default)]
pub struct MaxPool2x2 {
    cache: Option<(Vec<usize>, Vec<usize>)>,
}

impl MaxPool2x2 {
    pub fn fingerprint(&self) -> Option<u64> {
        let (argmax, _) = self.cache.as_ref()?;
        Some(super::fingerprint_bits(argmax.iter().map(|&i| i as u64)))
    }

    pub fn forward_train<T: Float>(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (y, argmax) = tensor::max_pool2x2(x)?;
        self.cache = Some((argmax, x.shape().to_vec()));
        Ok(y)
    }

    pub fn backward<T: Float>(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let (argmax, shape) = self.cache.take().ok_or_else(|| Error::NoCache("pool".into()))?;
        tensor::max_pool2x2_backward(dy, &argmax, &shape)
    }

    pub fn params<T: Float>(&self) -> Vec<&Param<T>> {
        Vec::new()
    }

    pub fn params_mut<T: Float>(&mut self) -> Vec<&mut Param<T>> {
        Vec::new()
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}

#[derive(Debug, Clone, Default)]
pub struct GlobalAvgPool {
    cache: Option<Vec<usize>>,
}

impl GlobalAvgPool {
    pub fn forward_train<T: Float>(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = tensor::global_avg_pool(x)?;
        self.cache = Some(x.shape().to_vec());
        Ok(y)
    }

    pub fn backward<T: Float>(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let shape = self.cache.take().ok_or_else(|| Error::NoCache("global_avg".into()))?;
        tensor::global_avg_pool_backward(dy, &shape)
    }

    pub fn params<T: Float>(&self) -> Vec<&Param<T>> {
        Vec::new()
    }

    pub fn params_mut<T: Float>(&mut self) -> Vec<&mut Param<T>> {
        Vec::new()
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}
