use super::{ArchId, Model, Node, Src};
use crate::error::{Error, Result};
use crate::layers::{
    BatchNorm, Concat, Conv2d, Dense, Dropout, GlobalAvgPool, Init, Layer, MaxPool2x2, Relu, ResidualAdd,
    SeparableConv2d, Sigmoid,
};
use crate::rng::SplitMix64;
use crate::tensor::{ConvSpec, Float, Padding};

pub const STEM_CHANNELS: usize = 16;
pub const DEFAULT_HEAD_WIDTH: usize = 64;
pub const DEFAULT_NUM_LABELS: usize = 6;
pub const HEAD_DROPOUT: f64 = 0.2;
const DEFAULT_SEED: u64 = 0x5eed;

/// Weights whose output feeds a BatchNorm start at this fraction of their
/// He draw. The normalized output does not depend on that scale, but an
/// Adam step has a fixed size, so smaller weights turn faster.
pub const PRE_NORM_INIT_SCALE: f64 = 0.01;

struct Graph<T: Float> {
    nodes: Vec<Node<T>>,
    rng: SplitMix64,
    seed: u64,
}

impl<T: Float> Graph<T> {
    fn push(&mut self, layer: Layer<T>, inputs: Vec<Src>) -> Src {
        self.nodes.push(Node { layer, inputs });
        Src::Node(self.nodes.len() - 1)
    }

    fn conv(&mut self, x: Src, cin: usize, cout: usize, k: usize, stride: usize) -> Result<Src> {
        let spec = ConvSpec::square(cout, k, stride, Padding::Same);
        let init = Init::HeUniform { fan_in: cin * k * k };
        let conv = Conv2d::new(cin, spec, init, &mut self.rng)?;
        Ok(self.push(Layer::Conv(conv), vec![x]))
    }

    fn sep(&mut self, x: Src, cin: usize, cout: usize, k: usize, stride: usize) -> Result<Src> {
        let sep = SeparableConv2d::new(cin, cout, k, stride, Padding::Same, &mut self.rng)?;
        Ok(self.push(Layer::SeparableConv(sep), vec![x]))
    }

    fn bn(&mut self, x: Src, c: usize) -> Src {
        if let Src::Node(i) = x {
            let w = match &mut self.nodes[i].layer {
                Layer::Conv(conv) => Some(&mut conv.kernel.value),
                Layer::SeparableConv(sep) => Some(&mut sep.pointwise.kernel.value),
                Layer::Dense(d) => Some(&mut d.weight.value),
                _ => None,
            };
            if let Some(w) = w {
                let s = T::from_f64(PRE_NORM_INIT_SCALE);
                w.data_mut().iter_mut().for_each(|v| *v = *v * s);
            }
        }
        self.push(Layer::BatchNorm(BatchNorm::new(c)), vec![x])
    }

    fn relu(&mut self, x: Src) -> Src {
        self.push(Layer::Relu(Relu::default()), vec![x])
    }

    fn add(&mut self, main: Src, shortcut: Src) -> Src {
        self.push(Layer::ResidualAdd(ResidualAdd), vec![main, shortcut])
    }

    fn maxpool(&mut self, x: Src) -> Src {
        self.push(Layer::MaxPool(MaxPool2x2::default()), vec![x])
    }

    fn gap(&mut self, x: Src) -> Src {
        self.push(Layer::GlobalAvgPool(GlobalAvgPool::default()), vec![x])
    }

    /// conv3×3 → BN → ReLU at the stem width.
    fn stem(&mut self, cin: usize) -> Result<Src> {
        let c = self.conv(Src::Input, cin, STEM_CHANNELS, 3, 1)?;
        let b = self.bn(c, STEM_CHANNELS);
        Ok(self.relu(b))
    }

    /// dense(ReLU) → BN → dropout → dense → sigmoid.
    fn head(&mut self, x: Src, features: usize, width: usize, labels: usize) -> Result<Src> {
        let d1 = Dense::new(features, width, true, &mut self.rng);
        let h = self.push(Layer::Dense(d1), vec![x]);
        let h = self.bn(h, width);
        let index = self.nodes.len() as u64;
        let drop = Dropout::new(HEAD_DROPOUT, self.seed, index)?;
        let h = self.push(Layer::Dropout(drop), vec![h]);
        let d2 = Dense::new(width, labels, false, &mut self.rng);
        let h = self.push(Layer::Dense(d2), vec![h]);
        Ok(self.push(Layer::Sigmoid(Sigmoid::default()), vec![h]))
    }

    fn resnet_block(&mut self, x: Src, cin: usize, cout: usize) -> Result<Src> {
        let h = self.conv(x, cin, cout, 3, 1)?;
        let h = self.bn(h, cout);
        let h = self.relu(h);
        let h = self.conv(h, cout, cout, 3, 1)?;
        let h = self.bn(h, cout);
        let shortcut = if cin == cout { x } else { self.conv(x, cin, cout, 1, 1)? };
        let y = self.add(h, shortcut);
        Ok(self.relu(y))
    }

    fn xception_block(&mut self, x: Src, cin: usize, cout: usize) -> Result<Src> {
        let h = self.sep(x, cin, cout, 3, 1)?;
        let h = self.bn(h, cout);
        let h = self.relu(h);
        let h = self.sep(h, cout, cout, 3, 1)?;
        let h = self.bn(h, cout);
        let shortcut = self.conv(x, cin, cout, 1, 1)?;
        Ok(self.add(h, shortcut))
    }

    /// conv → BN → ReLU inside an inception branch.
    fn conv_bn_relu(&mut self, x: Src, cin: usize, cout: usize, k: usize) -> Result<Src> {
        let h = self.conv(x, cin, cout, k, 1)?;
        let h = self.bn(h, cout);
        Ok(self.relu(h))
    }

    fn inception_resnet_block(&mut self, x: Src, c: usize) -> Result<Src> {
        const BRANCH: usize = 8;
        let b1 = self.conv_bn_relu(x, c, BRANCH, 1)?;
        let b2 = self.conv_bn_relu(x, c, BRANCH, 1)?;
        let b2 = self.conv_bn_relu(b2, BRANCH, BRANCH, 3)?;
        let b3 = self.conv_bn_relu(x, c, BRANCH, 1)?;
        let b3 = self.conv_bn_relu(b3, BRANCH, BRANCH, 3)?;
        let b3 = self.conv_bn_relu(b3, BRANCH, BRANCH, 3)?;
        let cat = self.push(Layer::Concat(Concat::default()), vec![b1, b2, b3]);
        // 1×1 filter expansion back to the block width.
        let expanded = self.conv(cat, 3 * BRANCH, c, 1, 1)?;
        let y = self.add(expanded, x);
        Ok(self.relu(y))
    }

    fn nasnet_cell(&mut self, x: Src, cin: usize, cout: usize) -> Result<Src> {
        let a = self.sep(x, cin, cout, 3, 1)?;
        let b = self.sep(x, cin, cout, 5, 1)?;
        let skip = if cin == cout { x } else { self.conv(x, cin, cout, 1, 1)? };
        let ab = self.add(a, b);
        let y = self.add(ab, skip);
        let y = self.bn(y, cout);
        Ok(self.relu(y))
    }
}

/// Builds `arch` with the default initialization seed.
pub fn build<T: Float>(arch: ArchId, input_shape: [usize; 3], num_labels: usize, head_width: usize) -> Result<Model<T>> {
    build_with_seed(arch, input_shape, num_labels, head_width, DEFAULT_SEED)
}

pub fn build_with_seed<T: Float>(
    arch: ArchId,
    input_shape: [usize; 3],
    num_labels: usize,
    head_width: usize,
    seed: u64,
) -> Result<Model<T>> {
    let [cin, h, w] = input_shape;
    if cin == 0 {
        return Err(Error::invalid("input must have at least one channel"));
    }
    if h < 16 || w < 16 {
        return Err(Error::invalid(format!("input {h}x{w} is too small; need at least 16x16")));
    }
    if num_labels == 0 || head_width == 0 {
        return Err(Error::invalid("num_labels and head_width must be at least 1"));
    }
    let pools = matches!(
        arch,
        ArchId::ResnetMicro | ArchId::XceptionMicro | ArchId::InceptionresnetMicro
    );
    if pools && (h % 2 != 0 || w % 2 != 0) {
        return Err(Error::invalid(format!(
            "{arch} downsamples with 2x2 max pooling; input {h}x{w} must have even sides"
        )));
    }

    let mut g = Graph::<T> {
        nodes: Vec::new(),
        rng: SplitMix64::from_parts(&[seed, 0x1417]),
        seed,
    };
    let x = g.stem(cin)?;
    let (features, out) = match arch {
        ArchId::ResnetMicro => {
            let x = g.resnet_block(x, 16, 16)?;
            let x = g.resnet_block(x, 16, 16)?;
            let x = g.maxpool(x);
            let x = g.resnet_block(x, 16, 32)?;
            let x = g.resnet_block(x, 32, 32)?;
            (32, g.gap(x))
        }
        ArchId::MobilenetMicro => {
            let mut x = x;
            let mut cin = STEM_CHANNELS;
            for (cout, stride) in [(32, 2), (32, 1), (64, 2)] {
                let h = g.sep(x, cin, cout, 3, stride)?;
                let h = g.bn(h, cout);
                x = g.relu(h);
                cin = cout;
            }
            (64, g.gap(x))
        }
        ArchId::XceptionMicro => {
            let x = g.xception_block(x, 16, 32)?;
            let x = g.maxpool(x);
            let x = g.xception_block(x, 32, 64)?;
            (64, g.gap(x))
        }
        ArchId::InceptionresnetMicro => {
            let x = g.inception_resnet_block(x, 16)?;
            let x = g.inception_resnet_block(x, 16)?;
            let x = g.maxpool(x);
            (16, g.gap(x))
        }
        ArchId::NasnetMicro => {
            let x = g.nasnet_cell(x, 16, 16)?;
            let x = g.nasnet_cell(x, 16, 32)?;
            (32, g.gap(x))
        }
    };
    g.head(out, features, head_width, num_labels)?;
    Ok(Model::from_nodes(arch, input_shape, num_labels, head_width, seed, g.nodes))
}
