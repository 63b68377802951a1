use super::{Init, Param};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::tensor::{conv2d_backward, conv2d_forward, ConvGeometry, ConvSpec, Float, Padding, Tensor};

fn take_cache<T: Float>(cache: &mut Option<Tensor<T>>, layer: &str) -> Result<Tensor<T>> {
    cache.take().ok_or_else(|| Error::NoCache(layer.to_string()))
}

#[derive(Debug, Clone)]
pub struct Conv2d<T: Float> {
    pub spec: ConvSpec,
    pub kernel: Param<T>,
    pub bias: Option<Param<T>>,
    cache: Option<Tensor<T>>,
}

impl<T: Float> Conv2d<T> {
    pub fn new(in_channels: usize, spec: ConvSpec, init: Init, rng: &mut SplitMix64) -> Result<Self> {
        spec.validate()?;
        let shape = [spec.out_channels, in_channels, spec.kernel_h, spec.kernel_w];
        let kernel = init.sample(&shape, rng);
        let bias = spec.bias.then(|| Tensor::zeros(&[spec.out_channels]));
        Self::from_parts(spec, kernel, bias)
    }

    pub fn from_parts(spec: ConvSpec, kernel: Tensor<T>, bias: Option<Tensor<T>>) -> Result<Self> {
        spec.validate()?;
        if kernel.rank() != 4 || kernel.shape()[0] != spec.out_channels {
            return Err(Error::shape(format!("conv kernel {:?} does not match {spec:?}", kernel.shape())));
        }
        if spec.bias != bias.is_some() {
            return Err(Error::invalid("conv bias presence disagrees with spec"));
        }
        Ok(Self {
            spec,
            kernel: Param::new("kernel", kernel),
            bias: bias.map(|b| Param::new("bias", b)),
            cache: None,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.kernel.value.shape()[1]
    }

    pub fn forward_eval(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        conv2d_forward(x, &self.kernel.value, self.bias.as_ref().map(|b| &b.value), &self.spec)
    }

    pub fn forward_train(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self.forward_eval(x)?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let x = take_cache(&mut self.cache, "conv")?;
        let g = conv2d_backward(dy, &x, &self.kernel.value, &self.spec)?;
        self.kernel.grad = g.dkernel;
        if let (Some(b), Some(db)) = (self.bias.as_mut(), g.dbias) {
            b.grad = db;
        }
        Ok(g.dx)
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        std::iter::once(&self.kernel).chain(self.bias.as_ref()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        std::iter::once(&mut self.kernel).chain(self.bias.as_mut()).collect()
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }

    pub fn cast<U: Float>(&self) -> Conv2d<U> {
        Conv2d {
            spec: self.spec,
            kernel: self.kernel.cast(),
            bias: self.bias.as_ref().map(Param::cast),
            cache: None,
        }
    }
}

fn depthwise_geometry<T: Float>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    spec: &ConvSpec,
) -> Result<(usize, ConvGeometry)> {
    spec.validate()?;
    let (n, c, h, w) = x.dims4()?;
    if kernel.shape() != [c, spec.kernel_h, spec.kernel_w] {
        return Err(Error::shape(format!(
            "depthwise kernel {:?} needs one [{}x{}] slice per input channel (C={c})",
            kernel.shape(),
            spec.kernel_h,
            spec.kernel_w
        )));
    }
    if spec.out_channels != c {
        return Err(Error::shape(format!(
            "depthwise conv keeps channel count: spec says {}, input has {c}",
            spec.out_channels
        )));
    }
    if let Some(b) = bias {
        b.expect_shape(&[c])?;
    }
    let g = ConvGeometry::new(c, h, w, spec.kernel_h, spec.kernel_w, spec.stride, spec.padding)?;
    Ok((n, g))
}

/// Output columns `ox` whose tap `kj` lands inside the input row.
#[inline]
fn valid_range(out: usize, k: usize, stride: usize, pad: usize, extent: usize) -> (usize, usize) {
    // ix = ox*stride + k - pad must lie in [0, extent)
    let lo = if k >= pad { 0 } else { (pad - k).div_ceil(stride) };
    let hi = if extent + pad <= k {
        0
    } else {
        ((extent + pad - k - 1) / stride + 1).min(out)
    };
    (lo, hi.max(lo))
}

/// Per-channel spatial convolution: `[N,C,H,W]` with a `[C,kh,kw]` kernel.
pub fn depthwise_conv_forward<T: Float>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    spec: &ConvSpec,
) -> Result<Tensor<T>> {
    let (n, g) = depthwise_geometry(x, kernel, bias, spec)?;
    let c = g.channels;
    let (kh, kw, st) = (g.kernel_h, g.kernel_w, g.stride);
    let mut out = Tensor::zeros(&[n, c, g.out_h, g.out_w]);
    let src = x.data();
    let dst = out.data_mut();
    for s in 0..n {
        for ch in 0..c {
            let plane = &src[(s * c + ch) * g.in_h * g.in_w..][..g.in_h * g.in_w];
            let oplane = &mut dst[(s * c + ch) * g.out_pixels()..][..g.out_pixels()];
            if let Some(b) = bias {
                oplane.fill(b.data()[ch]);
            }
            let kslice = &kernel.data()[ch * kh * kw..(ch + 1) * kh * kw];
            for ki in 0..kh {
                let (oy_lo, oy_hi) = valid_range(g.out_h, ki, st, g.pad_top, g.in_h);
                for kj in 0..kw {
                    let kv = kslice[ki * kw + kj];
                    let (ox_lo, ox_hi) = valid_range(g.out_w, kj, st, g.pad_left, g.in_w);
                    for oy in oy_lo..oy_hi {
                        let iy = oy * st + ki - g.pad_top;
                        let row = &plane[iy * g.in_w..(iy + 1) * g.in_w];
                        let orow = &mut oplane[oy * g.out_w..(oy + 1) * g.out_w];
                        for ox in ox_lo..ox_hi {
                            orow[ox] += kv * row[ox * st + kj - g.pad_left];
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of [`depthwise_conv_forward`]: `(dx, dkernel, dbias)`.
pub fn depthwise_conv_backward<T: Float>(
    dy: &Tensor<T>,
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    spec: &ConvSpec,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (n, g) = depthwise_geometry(x, kernel, None, spec)?;
    let c = g.channels;
    if dy.shape() != [n, c, g.out_h, g.out_w] {
        return Err(Error::shape(format!(
            "depthwise backward: dY {:?} does not match forward output {:?}",
            dy.shape(),
            [n, c, g.out_h, g.out_w]
        )));
    }
    let (kh, kw, st) = (g.kernel_h, g.kernel_w, g.stride);
    let mut dx = Tensor::zeros(x.shape());
    let mut dk = Tensor::zeros(kernel.shape());
    let mut db = Tensor::zeros(&[c]);
    for s in 0..n {
        for ch in 0..c {
            let plane = &x.data()[(s * c + ch) * g.in_h * g.in_w..][..g.in_h * g.in_w];
            let gplane = &dy.data()[(s * c + ch) * g.out_pixels()..][..g.out_pixels()];
            let dplane = &mut dx.data_mut()[(s * c + ch) * g.in_h * g.in_w..][..g.in_h * g.in_w];
            db.data_mut()[ch] += gplane.iter().copied().sum::<T>();
            for ki in 0..kh {
                let (oy_lo, oy_hi) = valid_range(g.out_h, ki, st, g.pad_top, g.in_h);
                for kj in 0..kw {
                    let kidx = ch * kh * kw + ki * kw + kj;
                    let kv = kernel.data()[kidx];
                    let (ox_lo, ox_hi) = valid_range(g.out_w, kj, st, g.pad_left, g.in_w);
                    let mut acc = T::zero();
                    for oy in oy_lo..oy_hi {
                        let iy = oy * st + ki - g.pad_top;
                        let grow = &gplane[oy * g.out_w..(oy + 1) * g.out_w];
                        let base = iy * g.in_w;
                        for ox in ox_lo..ox_hi {
                            let ix = base + ox * st + kj - g.pad_left;
                            acc += grow[ox] * plane[ix];
                            dplane[ix] += kv * grow[ox];
                        }
                    }
                    dk.data_mut()[kidx] += acc;
                }
            }
        }
    }
    Ok((dx, dk, db))
}

#[derive(Debug, Clone)]
pub struct DepthwiseConv2d<T: Float> {
    pub spec: ConvSpec,
    pub kernel: Param<T>,
    pub bias: Option<Param<T>>,
    cache: Option<Tensor<T>>,
}

impl<T: Float> DepthwiseConv2d<T> {
    pub fn new(
        channels: usize,
        kernel: usize,
        stride: usize,
        padding: Padding,
        rng: &mut SplitMix64,
    ) -> Result<Self> {
        let spec = ConvSpec::square(channels, kernel, stride, padding);
        let k = Init::HeUniform { fan_in: kernel * kernel }.sample(&[channels, kernel, kernel], rng);
        Self::from_parts(spec, k, Some(Tensor::zeros(&[channels])))
    }

    pub fn from_parts(spec: ConvSpec, kernel: Tensor<T>, bias: Option<Tensor<T>>) -> Result<Self> {
        spec.validate()?;
        if kernel.shape() != [spec.out_channels, spec.kernel_h, spec.kernel_w] {
            return Err(Error::shape(format!(
                "depthwise kernel {:?} does not match {spec:?}",
                kernel.shape()
            )));
        }
        Ok(Self {
            spec: ConvSpec { bias: bias.is_some(), ..spec },
            kernel: Param::new("kernel", kernel),
            bias: bias.map(|b| Param::new("bias", b)),
            cache: None,
        })
    }

    fn renamed(mut self, kernel: &'static str, bias: &'static str) -> Self {
        self.kernel.name = kernel;
        if let Some(b) = self.bias.as_mut() {
            b.name = bias;
        }
        self
    }

    pub fn forward_eval(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        depthwise_conv_forward(x, &self.kernel.value, self.bias.as_ref().map(|b| &b.value), &self.spec)
    }

    pub fn forward_train(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self.forward_eval(x)?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let x = take_cache(&mut self.cache, "depthwise_conv")?;
        let (dx, dk, db) = depthwise_conv_backward(dy, &x, &self.kernel.value, &self.spec)?;
        self.kernel.grad = dk;
        if let Some(b) = self.bias.as_mut() {
            b.grad = db;
        }
        Ok(dx)
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        std::iter::once(&self.kernel).chain(self.bias.as_ref()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        std::iter::once(&mut self.kernel).chain(self.bias.as_mut()).collect()
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }

    pub fn cast<U: Float>(&self) -> DepthwiseConv2d<U> {
        DepthwiseConv2d {
            spec: self.spec,
            kernel: self.kernel.cast(),
            bias: self.bias.as_ref().map(Param::cast),
            cache: None,
        }
    }
}

/// Depthwise convolution followed by a 1×1 pointwise convolution.
#[derive(Debug, Clone)]
pub struct SeparableConv2d<T: Float> {
    pub depthwise: DepthwiseConv2d<T>,
    pub pointwise: Conv2d<T>,
}

impl<T: Float> SeparableConv2d<T> {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: Padding,
        rng: &mut SplitMix64,
    ) -> Result<Self> {
        let depthwise = DepthwiseConv2d::new(in_channels, kernel, stride, padding, rng)?;
        let pointwise = Conv2d::new(
            in_channels,
            ConvSpec::square(out_channels, 1, 1, Padding::Valid),
            Init::HeUniform { fan_in: in_channels },
            rng,
        )?;
        Ok(Self::from_layers(depthwise, pointwise))
    }

    pub fn from_layers(depthwise: DepthwiseConv2d<T>, mut pointwise: Conv2d<T>) -> Self {
        pointwise.kernel.name = "pointwise_kernel";
        if let Some(b) = pointwise.bias.as_mut() {
            b.name = "pointwise_bias";
        }
        Self {
            depthwise: depthwise.renamed("depthwise_kernel", "depthwise_bias"),
            pointwise,
        }
    }

    pub fn forward_eval(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.pointwise.forward_eval(&self.depthwise.forward_eval(x)?)
    }

    pub fn forward_train(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mid = self.depthwise.forward_train(x)?;
        self.pointwise.forward_train(&mid)
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let dmid = self.pointwise.backward(dy)?;
        self.depthwise.backward(&dmid)
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        let mut p = self.depthwise.params();
        p.extend(self.pointwise.params());
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut p = self.depthwise.params_mut();
        p.extend(self.pointwise.params_mut());
        p
    }

    pub fn clear_cache(&mut self) {
        self.depthwise.clear_cache();
        self.pointwise.clear_cache();
    }

    pub fn cast<U: Float>(&self) -> SeparableConv2d<U> {
        SeparableConv2d {
            depthwise: self.depthwise.cast(),
            pointwise: self.pointwise.cast(),
        }
    }
}

/// Depthwise-then-pointwise convolution as a free function. `spec`
/// describes the spatial stage; the pointwise kernel is `[C_out, C, 1, 1]`.
pub fn separable_conv_forward<T: Float>(
    x: &Tensor<T>,
    depthwise_kernel: &Tensor<T>,
    depthwise_bias: Option<&Tensor<T>>,
    pointwise_kernel: &Tensor<T>,
    pointwise_bias: Option<&Tensor<T>>,
    spec: &ConvSpec,
) -> Result<Tensor<T>> {
    let (_, c, _, _) = x.dims4()?;
    let dw_spec = ConvSpec {
        out_channels: c,
        bias: depthwise_bias.is_some(),
        ..*spec
    };
    let mid = depthwise_conv_forward(x, depthwise_kernel, depthwise_bias, &dw_spec)?;
    let pk = pointwise_kernel.shape();
    if pk.len() != 4 || pk[1] != c || pk[2] != 1 || pk[3] != 1 {
        return Err(Error::shape(format!(
            "pointwise kernel must be [C_out, {c}, 1, 1], got {pk:?}"
        )));
    }
    let pw_spec = ConvSpec {
        out_channels: pk[0],
        kernel_h: 1,
        kernel_w: 1,
        stride: 1,
        padding: Padding::Valid,
        bias: pointwise_bias.is_some(),
    };
    conv2d_forward(&mid, pointwise_kernel, pointwise_bias, &pw_spec)
}
