use super::Param;
use crate::error::{Error, Result};
use crate::tensor::{Float, Tensor};

/// Elementwise sum of a main branch and a shortcut.
#[derive(Debug, Clone, Default)]
pub struct ResidualAdd;

/// Elementwise sum of two equally shaped tensors.
pub fn residual_add<T: Float>(main: &Tensor<T>, shortcut: &Tensor<T>) -> Result<Tensor<T>> {
    if main.shape() != shortcut.shape() {
        return Err(Error::shape(format!(
            "residual add: main {:?} vs shortcut {:?}",
            main.shape(),
            shortcut.shape()
        )));
    }
    main.add(shortcut)
}

impl ResidualAdd {
    pub fn forward<T: Float>(&self, inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
        match inputs {
            [a, b] => residual_add(a, b),
            _ => Err(Error::invalid(format!("residual add takes 2 inputs, got {}", inputs.len()))),
        }
    }

    pub fn backward<T: Float>(&mut self, dy: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        Ok(vec![dy.clone(), dy.clone()])
    }

    pub fn params<T: Float>(&self) -> Vec<&Param<T>> {
        Vec::new()
    }

    pub fn params_mut<T: Float>(&mut self) -> Vec<&mut Param<T>> {
        Vec::new()
    }

    pub fn clear_cache(&mut self) {}
}

/// Channel-axis concatenation of NCHW tensors.
#[derive(Debug, Clone, Default)]
pub struct Concat {
    cache: Option<Vec<usize>>,
}

impl Concat {
    pub fn forward_eval<T: Float>(&self, inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
        let first = inputs.first().ok_or_else(|| Error::invalid("concat of nothing"))?;
        let (n, _, h, w) = first.dims4()?;
        let mut channels = 0;
        for t in inputs {
            let (n2, c, h2, w2) = t.dims4()?;
            if (n2, h2, w2) != (n, h, w) {
                return Err(Error::shape(format!(
                    "concat: {:?} vs {:?}",
                    first.shape(),
                    t.shape()
                )));
            }
            channels += c;
        }
        let plane = h * w;
        let mut data = Vec::with_capacity(n * channels * plane);
        for s in 0..n {
            for t in inputs {
                let c = t.shape()[1];
                data.extend_from_slice(&t.data()[s * c * plane..(s + 1) * c * plane]);
            }
        }
        Tensor::new(&[n, channels, h, w], data)
    }

    pub fn forward_train<T: Float>(&mut self, inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
        let y = self.forward_eval(inputs)?;
        self.cache = Some(inputs.iter().map(|t| t.shape()[1]).collect());
        Ok(y)
    }

    pub fn backward<T: Float>(&mut self, dy: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let splits = self.cache.take().ok_or_else(|| Error::NoCache("concat".into()))?;
        let (n, c, h, w) = dy.dims4()?;
        if splits.iter().sum::<usize>() != c {
            return Err(Error::shape("concat backward: channel count differs from forward"));
        }
        let plane = h * w;
        let mut outs: Vec<Vec<T>> = splits.iter().map(|&ci| Vec::with_capacity(n * ci * plane)).collect();
        for s in 0..n {
            let mut offset = s * c * plane;
            for (out, &ci) in outs.iter_mut().zip(&splits) {
                out.extend_from_slice(&dy.data()[offset..offset + ci * plane]);
                offset += ci * plane;
            }
        }
        outs.into_iter()
            .zip(&splits)
            .map(|(d, &ci)| Tensor::new(&[n, ci, h, w], d))
            .collect()
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adding_zero_shortcut_is_identity() {
        let x = Tensor::<f32>::from_fn(&[1, 2, 2, 2], |i| i as f32);
        assert_eq!(residual_add(&x, &Tensor::zeros(x.shape())).unwrap(), x);
        assert!(residual_add(&x, &Tensor::zeros(&[1, 2, 2, 1])).is_err());
    }

    #[test]
    fn concat_roundtrips_through_backward() {
        let a = Tensor::<f64>::from_fn(&[2, 1, 2, 2], |i| i as f64);
        let b = Tensor::<f64>::from_fn(&[2, 3, 2, 2], |i| 100.0 + i as f64);
        let mut cat = Concat::default();
        let y = cat.forward_train(&[&a, &b]).unwrap();
        assert_eq!(y.shape(), &[2, 4, 2, 2]);
        assert_eq!(&y.data()[..4], a.select(0).data());
        let parts = cat.backward(&y).unwrap();
        assert_eq!(parts[0], a);
        assert_eq!(parts[1], b);
    }
}
