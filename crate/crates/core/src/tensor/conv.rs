use super::{gemm_nn, gemm_nt, gemm_tn, Float, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Zero-pad so that the output is `ceil(input / stride)`.
    Same,
    /// No padding.
    Valid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: Padding,
    pub bias: bool,
}

impl ConvSpec {
    pub fn square(out_channels: usize, kernel: usize, stride: usize, padding: Padding) -> Self {
        Self {
            out_channels,
            kernel_h: kernel,
            kernel_w: kernel,
            stride,
            padding,
            bias: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel_h == 0 || self.kernel_w == 0 {
            return Err(Error::invalid("kernel dimensions must be at least 1"));
        }
        if self.stride == 0 {
            return Err(Error::invalid("stride must be at least 1"));
        }
        if self.out_channels == 0 {
            return Err(Error::invalid("out_channels must be at least 1"));
        }
        Ok(())
    }
}

/// Resolved sizes and padding for one convolution over a single image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub channels: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub pad_top: usize,
    pub pad_left: usize,
    pub out_h: usize,
    pub out_w: usize,
}

fn resolve_axis(input: usize, kernel: usize, stride: usize, padding: Padding) -> Result<(usize, usize)> {
    match padding {
        Padding::Valid => {
            if input < kernel {
                return Err(Error::shape(format!(
                    "valid convolution produces an empty output: input extent {input} < kernel {kernel}"
                )));
            }
            Ok(((input - kernel) / stride + 1, 0))
        }
        Padding::Same => {
            let out = input.div_ceil(stride);
            let total = ((out - 1) * stride + kernel).saturating_sub(input);
            Ok((out, total / 2))
        }
    }
}

impl ConvGeometry {
    pub fn new(
        channels: usize,
        in_h: usize,
        in_w: usize,
        kernel_h: usize,
        kernel_w: usize,
        stride: usize,
        padding: Padding,
    ) -> Result<Self> {
        let (out_h, pad_top) = resolve_axis(in_h, kernel_h, stride, padding)?;
        let (out_w, pad_left) = resolve_axis(in_w, kernel_w, stride, padding)?;
        Ok(Self {
            channels,
            in_h,
            in_w,
            kernel_h,
            kernel_w,
            stride,
            pad_top,
            pad_left,
            out_h,
            out_w,
        })
    }

    pub fn patch_len(&self) -> usize {
        self.channels * self.kernel_h * self.kernel_w
    }

    pub fn out_pixels(&self) -> usize {
        self.out_h * self.out_w
    }

    /// A 1×1 stride-1 convolution whose column matrix is the image itself.
    fn is_pointwise(&self) -> bool {
        self.kernel_h == 1 && self.kernel_w == 1 && self.stride == 1 && self.pad_top == 0 && self.pad_left == 0
    }

    /// Input coordinate read by output coordinate `o` at kernel tap `k`.
    #[inline]
    fn source(o: usize, k: usize, stride: usize, pad: usize, extent: usize) -> Option<usize> {
        let pos = (o * stride + k) as isize - pad as isize;
        (pos >= 0 && (pos as usize) < extent).then_some(pos as usize)
    }
}

/// Unfold one `[C,H,W]` image into a `[C·kh·kw, H'·W']` column matrix.
pub fn im2col<T: Float>(img: &[T], g: &ConvGeometry, cols: &mut [T]) {
    let p = g.out_pixels();
    debug_assert_eq!(cols.len(), g.patch_len() * p);
    for c in 0..g.channels {
        let plane = &img[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ki in 0..g.kernel_h {
            for kj in 0..g.kernel_w {
                let row = (c * g.kernel_h + ki) * g.kernel_w + kj;
                let dst = &mut cols[row * p..(row + 1) * p];
                for oy in 0..g.out_h {
                    let line = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                    match ConvGeometry::source(oy, ki, g.stride, g.pad_top, g.in_h) {
                        None => line.fill(T::zero()),
                        Some(iy) => {
                            let src = &plane[iy * g.in_w..(iy + 1) * g.in_w];
                            for (ox, v) in line.iter_mut().enumerate() {
                                *v = match ConvGeometry::source(ox, kj, g.stride, g.pad_left, g.in_w) {
                                    Some(ix) => src[ix],
                                    None => T::zero(),
                                };
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Scatter-add a column matrix back onto a `[C,H,W]` image (adjoint of [`im2col`]).
pub fn col2im<T: Float>(cols: &[T], g: &ConvGeometry, img: &mut [T]) {
    let p = g.out_pixels();
    for c in 0..g.channels {
        let plane = &mut img[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ki in 0..g.kernel_h {
            for kj in 0..g.kernel_w {
                let row = (c * g.kernel_h + ki) * g.kernel_w + kj;
                let src = &cols[row * p..(row + 1) * p];
                for oy in 0..g.out_h {
                    let Some(iy) = ConvGeometry::source(oy, ki, g.stride, g.pad_top, g.in_h) else {
                        continue;
                    };
                    let line = &src[oy * g.out_w..(oy + 1) * g.out_w];
                    let dst = &mut plane[iy * g.in_w..(iy + 1) * g.in_w];
                    for (ox, &v) in line.iter().enumerate() {
                        if let Some(ix) = ConvGeometry::source(ox, kj, g.stride, g.pad_left, g.in_w) {
                            dst[ix] += v;
                        }
                    }
                }
            }
        }
    }
}

fn check_operands<T: Float>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    spec: &ConvSpec,
) -> Result<(usize, ConvGeometry)> {
    spec.validate()?;
    let (n, c, h, w) = x.dims4()?;
    let expected = [spec.out_channels, c, spec.kernel_h, spec.kernel_w];
    if kernel.shape() != expected {
        return Err(Error::shape(format!(
            "conv kernel {:?} does not fit input {:?} (expected {expected:?})",
            kernel.shape(),
            x.shape()
        )));
    }
    if let Some(b) = bias {
        if b.shape() != [spec.out_channels] {
            return Err(Error::shape(format!(
                "conv bias {:?}, expected [{}]",
                b.shape(),
                spec.out_channels
            )));
        }
    }
    let g = ConvGeometry::new(c, h, w, spec.kernel_h, spec.kernel_w, spec.stride, spec.padding)?;
    Ok((n, g))
}

/// Cross-correlation of an NCHW batch with a `[K,C,kh,kw]` kernel via im2col + GEMM.
pub fn conv2d_forward<T: Float>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    spec: &ConvSpec,
) -> Result<Tensor<T>> {
    let (n, g) = check_operands(x, kernel, bias, spec)?;
    let k = spec.out_channels;
    let (patch, pixels) = (g.patch_len(), g.out_pixels());
    let in_len = g.channels * g.in_h * g.in_w;
    let mut out = Tensor::zeros(&[n, k, g.out_h, g.out_w]);
    let mut cols = vec![T::zero(); if g.is_pointwise() { 0 } else { patch * pixels }];
    for s in 0..n {
        let img = &x.data()[s * in_len..(s + 1) * in_len];
        let dst = &mut out.data_mut()[s * k * pixels..(s + 1) * k * pixels];
        if let Some(b) = bias {
            for (row, &bv) in dst.chunks_mut(pixels).zip(b.data()) {
                row.fill(bv);
            }
        }
        if g.is_pointwise() {
            gemm_nn(k, patch, pixels, kernel.data(), img, dst);
        } else {
            im2col(img, &g, &mut cols);
            gemm_nn(k, patch, pixels, kernel.data(), &cols, dst);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ConvGrads<T: Float> {
    pub dx: Tensor<T>,
    pub dkernel: Tensor<T>,
    pub dbias: Option<Tensor<T>>,
}

/// Exact gradients of [`conv2d_forward`] given the forward operands.
pub fn conv2d_backward<T: Float>(
    dy: &Tensor<T>,
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    spec: &ConvSpec,
) -> Result<ConvGrads<T>> {
    let (n, g) = check_operands(x, kernel, None, spec)?;
    let k = spec.out_channels;
    if dy.shape() != [n, k, g.out_h, g.out_w] {
        return Err(Error::shape(format!(
            "conv backward: dY {:?} does not match forward output {:?}",
            dy.shape(),
            [n, k, g.out_h, g.out_w]
        )));
    }
    let (patch, pixels) = (g.patch_len(), g.out_pixels());
    let in_len = g.channels * g.in_h * g.in_w;
    let mut dx = Tensor::zeros(x.shape());
    let mut dkernel = Tensor::zeros(kernel.shape());
    let mut cols = vec![T::zero(); patch * pixels];
    let mut dcols = vec![T::zero(); patch * pixels];
    for s in 0..n {
        let img = &x.data()[s * in_len..(s + 1) * in_len];
        let dys = &dy.data()[s * k * pixels..(s + 1) * k * pixels];
        let dxs = &mut dx.data_mut()[s * in_len..(s + 1) * in_len];
        if g.is_pointwise() {
            gemm_nt(k, pixels, patch, dys, img, dkernel.data_mut());
            gemm_tn(patch, k, pixels, kernel.data(), dys, dxs);
        } else {
            im2col(img, &g, &mut cols);
            gemm_nt(k, pixels, patch, dys, &cols, dkernel.data_mut());
            dcols.fill(T::zero());
            gemm_tn(patch, k, pixels, kernel.data(), dys, &mut dcols);
            col2im(&dcols, &g, dxs);
        }
    }
    let dbias = spec.bias.then(|| {
        let mut db = Tensor::zeros(&[k]);
        for s in 0..n {
            for (ch, acc) in db.data_mut().iter_mut().enumerate() {
                let start = (s * k + ch) * pixels;
                *acc += dy.data()[start..start + pixels].iter().copied().sum::<T>();
            }
        }
        db
    });
    Ok(ConvGrads { dx, dkernel, dbias })
}
