//! Layers with explicit forward and backward passes.
//!
//! Every layer caches what its backward pass needs during
//! [`Layer::forward_train`]; [`Layer::forward_eval`] takes `&self` and
//! touches no state, so an eval-mode model can be shared across threads.

mod activation;
mod batchnorm;
mod conv;
mod dense;
mod dropout;
mod merge;
mod pool;

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::tensor::{Float, Tensor};

pub use activation::{activation, Activation, Relu, Sigmoid};
pub use batchnorm::{BatchNorm, BN_EPS, BN_MOMENTUM};
pub use conv::{
    depthwise_conv_backward, depthwise_conv_forward, separable_conv_forward, Conv2d, DepthwiseConv2d,
    SeparableConv2d,
};
pub use dense::Dense;
pub use dropout::{dropout_forward, Dropout};
pub use merge::{residual_add, Concat, ResidualAdd};
pub use pool::{GlobalAvgPool, MaxPool2x2};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Training forward pass; `step` keys the dropout masks.
    Train { step: u64 },
    Eval,
}

/// A trainable tensor together with its most recent gradient.
#[derive(Debug, Clone)]
pub struct Param<T: Float> {
    pub name: &'static str,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

impl<T: Float> Param<T> {
    pub fn new(name: &'static str, value: Tensor<T>) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self { name, value, grad }
    }

    pub fn cast<U: Float>(&self) -> Param<U> {
        Param {
            name: self.name,
            value: self.value.cast(),
            grad: self.grad.cast(),
        }
    }
}

/// Parameter initialization schemes.
#[derive(Debug, Clone, Copy)]
pub enum Init {
    /// U(±sqrt(6 / fan_in)), for weights feeding a ReLU.
    HeUniform { fan_in: usize },
    /// U(±sqrt(6 / (fan_in + fan_out))).
    GlorotUniform { fan_in: usize, fan_out: usize },
}

impl Init {
    pub fn sample<T: Float>(self, shape: &[usize], rng: &mut SplitMix64) -> Tensor<T> {
        let limit = match self {
            Init::HeUniform { fan_in } => (6.0 / fan_in as f64).sqrt(),
            Init::GlorotUniform { fan_in, fan_out } => (6.0 / (fan_in + fan_out) as f64).sqrt(),
        };
        Tensor::from_fn(shape, |_| T::from_f64(rng.uniform(-limit, limit)))
    }
}

pub(crate) fn fingerprint_bits(bits: impl Iterator<Item = u64>) -> u64 {
    // FNV-1a
    bits.fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b).wrapping_mul(0x0000_0100_0000_01b3))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Conv,
    DepthwiseConv,
    SeparableConv,
    Dense,
    BatchNorm,
    Dropout,
    Relu,
    Sigmoid,
    MaxPool,
    GlobalAvgPool,
    ResidualAdd,
    Concat,
}

impl LayerKind {
    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Conv => "conv",
            LayerKind::DepthwiseConv => "depthwise_conv",
            LayerKind::SeparableConv => "separable_conv",
            LayerKind::Dense => "dense",
            LayerKind::BatchNorm => "batchnorm",
            LayerKind::Dropout => "dropout",
            LayerKind::Relu => "relu",
            LayerKind::Sigmoid => "sigmoid",
            LayerKind::MaxPool => "pool",
            LayerKind::GlobalAvgPool => "global_avg",
            LayerKind::ResidualAdd => "residual_add",
            LayerKind::Concat => "concat",
        }
    }
}

#[derive(Debug, Clone)]
pub enum Layer<T: Float> {
    Conv(Conv2d<T>),
    DepthwiseConv(DepthwiseConv2d<T>),
    SeparableConv(SeparableConv2d<T>),
    Dense(Dense<T>),
    BatchNorm(BatchNorm<T>),
    Dropout(Dropout<T>),
    Relu(Relu<T>),
    Sigmoid(Sigmoid<T>),
    MaxPool(MaxPool2x2),
    GlobalAvgPool(GlobalAvgPool),
    ResidualAdd(ResidualAdd),
    Concat(Concat),
}

macro_rules! dispatch {
    ($self:expr, $l:ident => $body:expr) => {
        match $self {
            Layer::Conv($l) => $body,
            Layer::DepthwiseConv($l) => $body,
            Layer::SeparableConv($l) => $body,
            Layer::Dense($l) => $body,
            Layer::BatchNorm($l) => $body,
            Layer::Dropout($l) => $body,
            Layer::Relu($l) => $body,
            Layer::Sigmoid($l) => $body,
            Layer::MaxPool($l) => $body,
            Layer::GlobalAvgPool($l) => $body,
            Layer::ResidualAdd($l) => $body,
            Layer::Concat($l) => $body,
        }
    };
}

pub(crate) fn single<'a, T: Float>(inputs: &[&'a Tensor<T>], layer: &str) -> Result<&'a Tensor<T>> {
    match inputs {
        [x] => Ok(x),
        _ => Err(Error::invalid(format!(
            "{layer} takes one input, got {}",
            inputs.len()
        ))),
    }
}

impl<T: Float> Layer<T> {
    pub fn kind(&self) -> LayerKind {
        match self {
            Layer::Conv(_) => LayerKind::Conv,
            Layer::DepthwiseConv(_) => LayerKind::DepthwiseConv,
            Layer::SeparableConv(_) => LayerKind::SeparableConv,
            Layer::Dense(_) => LayerKind::Dense,
            Layer::BatchNorm(_) => LayerKind::BatchNorm,
            Layer::Dropout(_) => LayerKind::Dropout,
            Layer::Relu(_) => LayerKind::Relu,
            Layer::Sigmoid(_) => LayerKind::Sigmoid,
            Layer::MaxPool(_) => LayerKind::MaxPool,
            Layer::GlobalAvgPool(_) => LayerKind::GlobalAvgPool,
            Layer::ResidualAdd(_) => LayerKind::ResidualAdd,
            Layer::Concat(_) => LayerKind::Concat,
        }
    }

    pub fn forward_train(&mut self, inputs: &[&Tensor<T>], step: u64) -> Result<Tensor<T>> {
        match self {
            Layer::Dropout(l) => l.forward_train(single(inputs, "dropout")?, step),
            Layer::ResidualAdd(l) => l.forward(inputs),
            Layer::Concat(l) => l.forward_train(inputs),
            Layer::Conv(l) => l.forward_train(single(inputs, "conv")?),
            Layer::DepthwiseConv(l) => l.forward_train(single(inputs, "depthwise_conv")?),
            Layer::SeparableConv(l) => l.forward_train(single(inputs, "separable_conv")?),
            Layer::Dense(l) => l.forward_train(single(inputs, "dense")?),
            Layer::BatchNorm(l) => l.forward_train(single(inputs, "batchnorm")?),
            Layer::Relu(l) => l.forward_train(single(inputs, "relu")?),
            Layer::Sigmoid(l) => l.forward_train(single(inputs, "sigmoid")?),
            Layer::MaxPool(l) => l.forward_train(single(inputs, "pool")?),
            Layer::GlobalAvgPool(l) => l.forward_train(single(inputs, "global_avg")?),
        }
    }

    pub fn forward_eval(&self, inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
        match self {
            Layer::ResidualAdd(l) => l.forward(inputs),
            Layer::Concat(l) => l.forward_eval(inputs),
            Layer::Conv(l) => l.forward_eval(single(inputs, "conv")?),
            Layer::DepthwiseConv(l) => l.forward_eval(single(inputs, "depthwise_conv")?),
            Layer::SeparableConv(l) => l.forward_eval(single(inputs, "separable_conv")?),
            Layer::Dense(l) => l.forward_eval(single(inputs, "dense")?),
            Layer::BatchNorm(l) => l.forward_eval(single(inputs, "batchnorm")?),
            Layer::Dropout(_) => Ok(single(inputs, "dropout")?.clone()),
            Layer::Relu(_) => Ok(activation(single(inputs, "relu")?, Activation::Relu)),
            Layer::Sigmoid(_) => Ok(activation(single(inputs, "sigmoid")?, Activation::Sigmoid)),
            Layer::MaxPool(_) => Ok(crate::tensor::max_pool2x2(single(inputs, "pool")?)?.0),
            Layer::GlobalAvgPool(_) => crate::tensor::global_avg_pool(single(inputs, "global_avg")?),
        }
    }

    /// Gradients with respect to each input, in input order. Parameter
    /// gradients are written into the layer's [`Param::grad`] slots.
    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let dx = match self {
            Layer::ResidualAdd(l) => return l.backward(dy),
            Layer::Concat(l) => return l.backward(dy),
            Layer::Conv(l) => l.backward(dy)?,
            Layer::DepthwiseConv(l) => l.backward(dy)?,
            Layer::SeparableConv(l) => l.backward(dy)?,
            Layer::Dense(l) => l.backward(dy)?,
            Layer::BatchNorm(l) => l.backward(dy)?,
            Layer::Dropout(l) => l.backward(dy)?,
            Layer::Relu(l) => l.backward(dy)?,
            Layer::Sigmoid(l) => l.backward(dy)?,
            Layer::MaxPool(l) => l.backward(dy)?,
            Layer::GlobalAvgPool(l) => l.backward(dy)?,
        };
        Ok(vec![dx])
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        dispatch!(self, l => l.params())
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        dispatch!(self, l => l.params_mut())
    }

    /// Non-trainable state tensors (batchnorm running statistics).
    pub fn state(&self) -> Vec<(&'static str, &Tensor<T>)> {
        match self {
            Layer::BatchNorm(l) => l.state(),
            _ => Vec::new(),
        }
    }

    pub fn state_mut(&mut self) -> Vec<(&'static str, &mut Tensor<T>)> {
        match self {
            Layer::BatchNorm(l) => l.state_mut(),
            _ => Vec::new(),
        }
    }

    /// Hash of the piecewise-linear region (ReLU on/off pattern, max-pool
    /// winners) chosen by the last training forward pass, if this layer has
    /// kinks and a cached pass.
    pub fn region_fingerprint(&self) -> Option<u64> {
        match self {
            Layer::Relu(l) => l.fingerprint(),
            Layer::Dense(l) => l.fingerprint(),
            Layer::MaxPool(l) => l.fingerprint(),
            _ => None,
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }

    pub fn clear_cache(&mut self) {
        dispatch!(self, l => l.clear_cache())
    }

    pub fn cast<U: Float>(&self) -> Layer<U> {
        match self {
            Layer::Conv(l) => Layer::Conv(l.cast()),
            Layer::DepthwiseConv(l) => Layer::DepthwiseConv(l.cast()),
            Layer::SeparableConv(l) => Layer::SeparableConv(l.cast()),
            Layer::Dense(l) => Layer::Dense(l.cast()),
            Layer::BatchNorm(l) => Layer::BatchNorm(l.cast()),
            Layer::Dropout(l) => Layer::Dropout(l.cast()),
            Layer::Relu(_) => Layer::Relu(Relu::default()),
            Layer::Sigmoid(_) => Layer::Sigmoid(Sigmoid::default()),
            Layer::MaxPool(_) => Layer::MaxPool(MaxPool2x2::default()),
            Layer::GlobalAvgPool(l) => Layer::GlobalAvgPool(l.clone()),
            Layer::ResidualAdd(l) => Layer::ResidualAdd(l.clone()),
            Layer::Concat(l) => Layer::Concat(l.clone()),
        }
    }
}
