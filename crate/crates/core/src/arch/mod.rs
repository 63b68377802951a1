//! Model graphs: the five micro backbones with the shared classification head.

mod build;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::layers::{Layer, LayerKind, Mode, Param};
use crate::tensor::{Float, Tensor};

pub use build::{build, build_with_seed, DEFAULT_HEAD_WIDTH, DEFAULT_NUM_LABELS, HEAD_DROPOUT, STEM_CHANNELS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ArchId {
    ResnetMicro,
    XceptionMicro,
    InceptionresnetMicro,
    MobilenetMicro,
    NasnetMicro,
}

impl ArchId {
    pub const ALL: [ArchId; 5] = [
        ArchId::ResnetMicro,
        ArchId::XceptionMicro,
        ArchId::InceptionresnetMicro,
        ArchId::MobilenetMicro,
        ArchId::NasnetMicro,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ArchId::ResnetMicro => "resnet_micro",
            ArchId::XceptionMicro => "xception_micro",
            ArchId::InceptionresnetMicro => "inceptionresnet_micro",
            ArchId::MobilenetMicro => "mobilenet_micro",
            ArchId::NasnetMicro => "nasnet_micro",
        }
    }

    /// Epoch budgets used when a run does not override them.
    pub fn default_epochs(self) -> usize {
        match self {
            ArchId::ResnetMicro => 28,
            ArchId::MobilenetMicro => 34,
            ArchId::XceptionMicro => 14,
            ArchId::InceptionresnetMicro => 6,
            ArchId::NasnetMicro => 31,
        }
    }

    pub fn valid_names() -> String {
        Self::ALL.map(ArchId::name).join(", ")
    }
}

impl fmt::Display for ArchId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ArchId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown architecture `{s}` (valid: {})",
                    Self::valid_names()
                ))
            })
    }
}

/// Where a node reads one of its inputs from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Src {
    Input,
    Node(usize),
}

#[derive(Debug, Clone)]
pub struct Node<T: Float> {
    pub layer: Layer<T>,
    pub inputs: Vec<Src>,
}

/// A layer DAG in topological order; the last node produces the output.
#[derive(Debug, Clone)]
pub struct Model<T: Float = f32> {
    pub arch: ArchId,
    pub input_shape: [usize; 3],
    pub num_labels: usize,
    pub head_width: usize,
    pub seed: u64,
    nodes: Vec<Node<T>>,
    has_cache: bool,
}

/// A named parameter gradient, in model parameter order.
pub type GradientSet<T> = Vec<(String, Tensor<T>)>;

impl<T: Float> Model<T> {
    pub(crate) fn from_nodes(
        arch: ArchId,
        input_shape: [usize; 3],
        num_labels: usize,
        head_width: usize,
        seed: u64,
        nodes: Vec<Node<T>>,
    ) -> Self {
        Self {
            arch,
            input_shape,
            num_labels,
            head_width,
            seed,
            nodes,
            has_cache: false,
        }
    }

    pub fn nodes(&self) -> &[Node<T>] {
        &self.nodes
    }

    pub fn nodes_mut(&mut self) -> &mut [Node<T>] {
        &mut self.nodes
    }

    pub fn layer_kinds(&self) -> Vec<LayerKind> {
        self.nodes.iter().map(|n| n.layer.kind()).collect()
    }

    fn check_batch(&self, x: &Tensor<T>) -> Result<()> {
        let (_, c, h, w) = x.dims4()?;
        if [c, h, w] != self.input_shape {
            return Err(Error::shape(format!(
                "batch {:?} does not match model input [N, {}, {}, {}]",
                x.shape(),
                self.input_shape[0],
                self.input_shape[1],
                self.input_shape[2]
            )));
        }
        Ok(())
    }

    fn run(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        self.check_batch(x)?;
        let mut outputs: Vec<Tensor<T>> = Vec::with_capacity(self.nodes.len());
        for node in &mut self.nodes {
            let inputs: Vec<&Tensor<T>> = node
                .inputs
                .iter()
                .map(|s| match *s {
                    Src::Input => x,
                    Src::Node(j) => &outputs[j],
                })
                .collect();
            let y = match mode {
                Mode::Train { step } => node.layer.forward_train(&inputs, step)?,
                Mode::Eval => node.layer.forward_eval(&inputs)?,
            };
            outputs.push(y);
        }
        self.has_cache = matches!(mode, Mode::Train { .. });
        outputs.pop().ok_or_else(|| Error::invalid("empty model"))
    }

    /// Forward pass returning `[N, num_labels]` probabilities.
    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        self.run(x, mode)
    }

    /// Eval-mode forward that leaves the model untouched.
    pub fn predict(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut outputs = self.trace(x)?;
        outputs.pop().ok_or_else(|| Error::invalid("empty model"))
    }

    /// Eval-mode outputs of every node, in node order.
    pub fn trace(&self, x: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        self.check_batch(x)?;
        let mut outputs: Vec<Tensor<T>> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let inputs: Vec<&Tensor<T>> = node
                .inputs
                .iter()
                .map(|s| match *s {
                    Src::Input => x,
                    Src::Node(j) => &outputs[j],
                })
                .collect();
            let y = node.layer.forward_eval(&inputs)?;
            outputs.push(y);
        }
        Ok(outputs)
    }

    /// Back-propagates `d_prob` (gradient of the loss with respect to the
    /// output probabilities) through the cached training forward pass.
    /// Fills every parameter gradient and returns the input gradient.
    pub fn backward(&mut self, d_prob: &Tensor<T>) -> Result<Tensor<T>> {
        if !self.has_cache {
            return Err(Error::NoCache(format!("model `{}`", self.arch)));
        }
        self.has_cache = false;
        let last = self.nodes.len() - 1;
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        grads[last] = Some(d_prob.clone());
        let mut dx: Option<Tensor<T>> = None;
        for i in (0..self.nodes.len()).rev() {
            let Some(g) = grads[i].take() else {
                self.nodes[i].layer.clear_cache();
                continue;
            };
            let input_grads = self.nodes[i].layer.backward(&g)?;
            for (src, ig) in self.nodes[i].inputs.clone().into_iter().zip(input_grads) {
                let slot = match src {
                    Src::Input => &mut dx,
                    Src::Node(j) => &mut grads[j],
                };
                match slot {
                    Some(acc) => acc.add_assign(&ig)?,
                    None => *slot = Some(ig),
                }
            }
        }
        dx.ok_or_else(|| Error::invalid("model output does not depend on its input"))
    }

    /// Fingerprint of the piecewise-linear region selected by the last
    /// training forward pass. Two inputs with equal fingerprints lie in the
    /// same linear region of every ReLU and max-pool, so a central
    /// difference between them is a valid derivative estimate.
    pub fn region_fingerprint(&self) -> u64 {
        crate::layers::fingerprint_bits(self.nodes.iter().filter_map(|n| n.layer.region_fingerprint()))
    }

    pub fn params(&self) -> Vec<(String, &Param<T>)> {
        self.nodes
            .iter()
            .enumerate()
            .flat_map(|(i, n)| {
                let kind = n.layer.kind().name();
                n.layer
                    .params()
                    .into_iter()
                    .map(move |p| (format!("{i}.{kind}.{}", p.name), p))
            })
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.nodes.iter_mut().flat_map(|n| n.layer.params_mut()).collect()
    }

    pub fn state(&self) -> Vec<(String, &Tensor<T>)> {
        self.nodes
            .iter()
            .enumerate()
            .flat_map(|(i, n)| {
                let kind = n.layer.kind().name();
                n.layer
                    .state()
                    .into_iter()
                    .map(move |(name, t)| (format!("{i}.{kind}.{name}"), t))
            })
            .collect()
    }

    pub fn state_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.nodes
            .iter_mut()
            .flat_map(|n| n.layer.state_mut().into_iter().map(|(_, t)| t))
            .collect()
    }

    pub fn gradients(&self) -> GradientSet<T> {
        self.params()
            .into_iter()
            .map(|(name, p)| (name, p.grad.clone()))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.nodes.iter().map(|n| n.layer.param_count()).sum()
    }

    /// All parameters concatenated in model order.
    pub fn flat_params(&self) -> Vec<T> {
        self.params()
            .into_iter()
            .flat_map(|(_, p)| p.value.data().to_vec())
            .collect()
    }

    pub fn cast<U: Float>(&self) -> Model<U> {
        Model {
            arch: self.arch,
            input_shape: self.input_shape,
            num_labels: self.num_labels,
            head_width: self.head_width,
            seed: self.seed,
            nodes: self
                .nodes
                .iter()
                .map(|n| Node {
                    layer: n.layer.cast(),
                    inputs: n.inputs.clone(),
                })
                .collect(),
            has_cache: false,
        }
    }
}
