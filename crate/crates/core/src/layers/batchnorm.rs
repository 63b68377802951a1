use super::Param;
use crate::error::{Error, Result};
use crate::tensor::{Float, Tensor};

pub const BN_EPS: f64 = 1e-5;
/// Weight kept on the old running statistic per update.
pub const BN_MOMENTUM: f64 = 0.9;

/// Batch normalization over the channel axis of `[N,C,H,W]` or the
/// feature axis of `[N,D]`.
#[derive(Debug, Clone)]
pub struct BatchNorm<T: Float> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub eps: f64,
    pub momentum: f64,
    cache: Option<Cache<T>>,
}

#[derive(Debug, Clone)]
struct Cache<T: Float> {
    x_hat: Tensor<T>,
    inv_std: Vec<T>,
}

/// (outer, channels, inner) view of a batch.
fn layout<T: Float>(x: &Tensor<T>) -> Result<(usize, usize, usize)> {
    match x.shape() {
        &[n, d] => Ok((n, d, 1)),
        &[n, c, h, w] => Ok((n, c, h * w)),
        s => Err(Error::shape(format!("batchnorm expects [N,D] or [N,C,H,W], got {s:?}"))),
    }
}

impl<T: Float> BatchNorm<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Param::new("gamma", Tensor::full(&[channels], T::one())),
            beta: Param::new("beta", Tensor::zeros(&[channels])),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], T::one()),
            eps: BN_EPS,
            momentum: BN_MOMENTUM,
            cache: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.value.len()
    }

    fn check(&self, c: usize) -> Result<()> {
        if c != self.channels() {
            return Err(Error::shape(format!(
                "batchnorm has {} channels, input has {c}",
                self.channels()
            )));
        }
        Ok(())
    }

    pub fn forward_eval(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (n, c, inner) = layout(x)?;
        self.check(c)?;
        let eps = T::from_f64(self.eps);
        let mut out = x.clone();
        let data = out.data_mut();
        for ch in 0..c {
            let scale = self.gamma.value.data()[ch] / (self.running_var.data()[ch] + eps).sqrt();
            let mean = self.running_mean.data()[ch];
            let shift = self.beta.value.data()[ch];
            for s in 0..n {
                for v in &mut data[(s * c + ch) * inner..][..inner] {
                    *v = (*v - mean) * scale + shift;
                }
            }
        }
        Ok(out)
    }

    pub fn forward_train(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (n, c, inner) = layout(x)?;
        self.check(c)?;
        if n < 2 {
            return Err(Error::invalid(
                "batchnorm in train mode needs a batch of at least 2 (variance is degenerate)",
            ));
        }
        let count = T::from_f64((n * inner) as f64);
        let eps = T::from_f64(self.eps);
        let mom = T::from_f64(self.momentum);
        let mut x_hat = Tensor::zeros(x.shape());
        let mut out = Tensor::zeros(x.shape());
        let mut inv_std = Vec::with_capacity(c);
        for ch in 0..c {
            let chunks = || (0..n).map(move |s| (s * c + ch) * inner);
            let mut sum = T::zero();
            for start in chunks() {
                sum += x.data()[start..start + inner].iter().copied().sum::<T>();
            }
            let mean = sum / count;
            let mut sq = T::zero();
            for start in chunks() {
                for &v in &x.data()[start..start + inner] {
                    sq += (v - mean) * (v - mean);
                }
            }
            let var = sq / count;
            let istd = T::one() / (var + eps).sqrt();
            inv_std.push(istd);
            let (g, b) = (self.gamma.value.data()[ch], self.beta.value.data()[ch]);
            for start in chunks() {
                for i in start..start + inner {
                    let h = (x.data()[i] - mean) * istd;
                    x_hat.data_mut()[i] = h;
                    out.data_mut()[i] = g * h + b;
                }
            }
            let rm = &mut self.running_mean.data_mut()[ch];
            *rm = mom * *rm + (T::one() - mom) * mean;
            let rv = &mut self.running_var.data_mut()[ch];
            *rv = mom * *rv + (T::one() - mom) * var;
        }
        self.cache = Some(Cache { x_hat, inv_std });
        Ok(out)
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let Cache { x_hat, inv_std } = self.cache.take().ok_or_else(|| Error::NoCache("batchnorm".into()))?;
        dy.expect_shape(x_hat.shape())?;
        let (n, c, inner) = layout(dy)?;
        let m = T::from_f64((n * inner) as f64);
        let mut dx = Tensor::zeros(dy.shape());
        let mut dgamma = Tensor::zeros(&[c]);
        let mut dbeta = Tensor::zeros(&[c]);
        for ch in 0..c {
            let mut sg = T::zero();
            let mut sgh = T::zero();
            for s in 0..n {
                let start = (s * c + ch) * inner;
                for i in start..start + inner {
                    sg += dy.data()[i];
                    sgh += dy.data()[i] * x_hat.data()[i];
                }
            }
            dgamma.data_mut()[ch] = sgh;
            dbeta.data_mut()[ch] = sg;
            let k = self.gamma.value.data()[ch] * inv_std[ch] / m;
            for s in 0..n {
                let start = (s * c + ch) * inner;
                for i in start..start + inner {
                    dx.data_mut()[i] = k * (m * dy.data()[i] - sg - x_hat.data()[i] * sgh);
                }
            }
        }
        self.gamma.grad = dgamma;
        self.beta.grad = dbeta;
        Ok(dx)
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        vec![&self.gamma, &self.beta]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.gamma, &mut self.beta]
    }

    pub fn state(&self) -> Vec<(&'static str, &Tensor<T>)> {
        vec![("running_mean", &self.running_mean), ("running_var", &self.running_var)]
    }

    pub fn state_mut(&mut self) -> Vec<(&'static str, &mut Tensor<T>)> {
        vec![
            ("running_mean", &mut self.running_mean),
            ("running_var", &mut self.running_var),
        ]
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }

    pub fn cast<U: Float>(&self) -> BatchNorm<U> {
        BatchNorm {
            gamma: self.gamma.cast(),
            beta: self.beta.cast(),
            running_mean: self.running_mean.cast(),
            running_var: self.running_var.cast(),
            eps: self.eps,
            momentum: self.momentum,
            cache: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    #[test]
    fn two_point_standardization() {
        let mut bn = BatchNorm::<f64>::new(1);
        let y = bn.forward_train(&Tensor::new(&[2, 1], vec![1.0, 3.0]).unwrap()).unwrap();
        assert!((y.data()[0] + 1.0).abs() < 1e-4 && (y.data()[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn eval_with_matching_stats_is_identity() {
        let mut bn = BatchNorm::<f64>::new(2);
        let (mu, var) = ([0.3, -1.2], [2.0, 0.5]);
        bn.running_mean = Tensor::new(&[2], mu.to_vec()).unwrap();
        bn.running_var = Tensor::new(&[2], var.to_vec()).unwrap();
        bn.gamma.value = Tensor::from_fn(&[2], |i| (var[i] + BN_EPS).sqrt());
        bn.beta.value = Tensor::new(&[2], mu.to_vec()).unwrap();
        let mut rng = SplitMix64::new(0);
        let x = Tensor::from_fn(&[3, 2, 2, 2], |_| rng.uniform(-2.0, 2.0));
        assert!(bn.forward_eval(&x).unwrap().max_abs_diff(&x).unwrap() < 1e-12);
    }

    #[test]
    fn train_output_moments_match_gamma_beta() {
        let mut bn = BatchNorm::<f64>::new(3);
        bn.gamma.value = Tensor::new(&[3], vec![0.5, 2.0, 1.5]).unwrap();
        bn.beta.value = Tensor::new(&[3], vec![-1.0, 0.25, 3.0]).unwrap();
        let mut rng = SplitMix64::new(1);
        let x = Tensor::from_fn(&[4, 3, 3, 3], |_| rng.uniform(-5.0, 5.0));
        let y = bn.forward_train(&x).unwrap();
        for ch in 0..3 {
            let vals: Vec<f64> = (0..4).flat_map(|s| y.data()[(s * 3 + ch) * 9..][..9].to_vec()).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!((mean - bn.beta.value.data()[ch]).abs() < 1e-4);
            assert!((var - bn.gamma.value.data()[ch].powi(2)).abs() < 1e-4 * var.max(1.0));
        }
    }

    #[test]
    fn running_stats_follow_momentum() {
        let mut bn = BatchNorm::<f64>::new(1);
        bn.forward_train(&Tensor::new(&[2, 1], vec![1.0, 3.0]).unwrap()).unwrap();
        assert!((bn.running_mean.data()[0] - 0.2).abs() < 1e-12);
        assert!((bn.running_var.data()[0] - (0.9 + 0.1 * 1.0)).abs() < 1e-12);
    }

    #[test]
    fn batch_of_one_is_rejected_in_train_mode() {
        let mut bn = BatchNorm::<f32>::new(4);
        assert!(matches!(bn.forward_train(&Tensor::zeros(&[1, 4])), Err(Error::InvalidArgument(_))));
        assert!(bn.forward_eval(&Tensor::zeros(&[1, 4])).is_ok());
    }
}
