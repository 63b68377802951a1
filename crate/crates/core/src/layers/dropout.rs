use super::{Mode, Param};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::tensor::{Float, Tensor};

fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid(format!("dropout rate must be in [0, 1), got {rate}")));
    }
    Ok(())
}

/// Inverted dropout: zero with probability `rate`, scale survivors by
/// `1 / (1 - rate)`. Returns the output and the multiplicative mask.
pub fn dropout_forward<T: Float>(
    x: &Tensor<T>,
    rate: f64,
    mode: Mode,
    rng: &mut SplitMix64,
) -> Result<(Tensor<T>, Option<Vec<T>>)> {
    check_rate(rate)?;
    if mode == Mode::Eval || rate == 0.0 {
        return Ok((x.clone(), None));
    }
    let keep = T::from_f64(1.0 / (1.0 - rate));
    let mask: Vec<T> = (0..x.len())
        .map(|_| if rng.bernoulli(rate) { T::zero() } else { keep })
        .collect();
    let data = x.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
    Ok((Tensor::new(x.shape(), data)?, Some(mask)))
}

/// Dropout layer whose mask stream is keyed by `(seed, index, step)`.
#[derive(Debug, Clone)]
pub struct Dropout<T: Float> {
    pub rate: f64,
    pub seed: u64,
    pub index: u64,
    cache: Option<Option<Vec<T>>>,
}

impl<T: Float> Dropout<T> {
    pub fn new(rate: f64, seed: u64, index: u64) -> Result<Self> {
        check_rate(rate)?;
        Ok(Self {
            rate,
            seed,
            index,
            cache: None,
        })
    }

    pub fn forward_train(&mut self, x: &Tensor<T>, step: u64) -> Result<Tensor<T>> {
        let mut rng = SplitMix64::from_parts(&[self.seed, self.index, step]);
        let (y, mask) = dropout_forward(x, self.rate, Mode::Train { step }, &mut rng)?;
        self.cache = Some(mask);
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let mask = self.cache.take().ok_or_else(|| Error::NoCache("dropout".into()))?;
        match mask {
            None => Ok(dy.clone()),
            Some(m) => {
                if m.len() != dy.len() {
                    return Err(Error::shape("dropout backward: dY does not match cached mask"));
                }
                let data = dy.data().iter().zip(&m).map(|(&g, &k)| g * k).collect();
                Tensor::new(dy.shape(), data)
            }
        }
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

    pub fn cast<U: Float>(&self) -> Dropout<U> {
        Dropout {
            rate: self.rate,
            seed: self.seed,
            index: self.index,
            cache: None,
        }
    }
}
