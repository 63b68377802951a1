use super::{Init, Param};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::tensor::{gemm_nn, gemm_nt, gemm_tn, Float, Tensor};

/// Fully connected layer `y = xW + b`, optionally with a fused ReLU.
#[derive(Debug, Clone)]
pub struct Dense<T: Float> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    pub relu: bool,
    cache: Option<(Tensor<T>, Tensor<T>)>,
}

impl<T: Float> Dense<T> {
    pub fn new(inputs: usize, units: usize, relu: bool, rng: &mut SplitMix64) -> Self {
        let init = if relu {
            Init::HeUniform { fan_in: inputs }
        } else {
            Init::GlorotUniform { fan_in: inputs, fan_out: units }
        };
        let w = init.sample(&[inputs, units], rng);
        Self::from_parts(w, Tensor::zeros(&[units]), relu).expect("consistent shapes")
    }

    pub fn from_parts(weight: Tensor<T>, bias: Tensor<T>, relu: bool) -> Result<Self> {
        let (_, u) = weight.dims2()?;
        bias.expect_shape(&[u])?;
        Ok(Self {
            weight: Param::new("weight", weight),
            bias: Param::new("bias", bias),
            relu,
            cache: None,
        })
    }

    pub fn units(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn forward_eval(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (n, d) = x.dims2()?;
        let (d2, u) = self.weight.value.dims2()?;
        if d != d2 {
            return Err(Error::shape(format!(
                "dense input {:?} does not match weight {:?}",
                x.shape(),
                self.weight.value.shape()
            )));
        }
        let mut out = Tensor::zeros(&[n, u]);
        for row in out.data_mut().chunks_mut(u) {
            row.copy_from_slice(self.bias.value.data());
        }
        gemm_nn(n, d, u, x.data(), self.weight.value.data(), out.data_mut());
        if self.relu {
            out.data_mut().iter_mut().for_each(|v| *v = v.max(T::zero()));
        }
        Ok(out)
    }

    pub fn forward_train(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self.forward_eval(x)?;
        self.cache = Some((x.clone(), y.clone()));
        Ok(y)
    }

    pub fn fingerprint(&self) -> Option<u64> {
        let (_, y) = self.cache.as_ref().filter(|_| self.relu)?;
        Some(super::fingerprint_bits(y.data().iter().map(|&v| (v > T::zero()) as u64)))
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let (x, y) = self.cache.take().ok_or_else(|| Error::NoCache("dense".into()))?;
        dy.expect_shape(y.shape())?;
        let (n, d) = x.dims2()?;
        let u = self.units();
        let dz = if self.relu {
            dy.zip_map(&y, |g, out| if out > T::zero() { g } else { T::zero() })?
        } else {
            dy.clone()
        };
        let mut dw = Tensor::zeros(&[d, u]);
        gemm_tn(d, n, u, x.data(), dz.data(), dw.data_mut());
        let mut db = Tensor::zeros(&[u]);
        for row in dz.data().chunks(u) {
            for (acc, &g) in db.data_mut().iter_mut().zip(row) {
                *acc += g;
            }
        }
        let mut dx = Tensor::zeros(&[n, d]);
        gemm_nt(n, u, d, dz.data(), self.weight.value.data(), dx.data_mut());
        self.weight.grad = dw;
        self.bias.grad = db;
        Ok(dx)
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        vec![&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }

    pub fn cast<U: Float>(&self) -> Dense<U> {
        Dense {
            weight: self.weight.cast(),
            bias: self.bias.cast(),
            relu: self.relu,
            cache: None,
        }
    }
}
