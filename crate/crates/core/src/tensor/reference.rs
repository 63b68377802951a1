//! Direct loop implementations kept as independent oracles for the
//! optimized kernels. Slow and simple on purpose; not used on any
//! training path.

use super::{ConvGeometry, ConvSpec, Float, Padding, Tensor};

pub fn matmul_naive<T: Float>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let n = b.shape()[1];
    let mut out = Tensor::zeros(&[m, n]);
    for i in 0..m {
        for j in 0..n {
            let mut s = T::zero();
            for p in 0..k {
                s += a.data()[i * k + p] * b.data()[p * n + j];
            }
            out.data_mut()[i * n + j] = s;
        }
    }
    out
}

fn padded_read<T: Float>(x: &Tensor<T>, s: usize, c: usize, y: isize, xx: isize) -> T {
    let [_, ch, h, w] = x.shape()[..] else { unreachable!() };
    if y < 0 || xx < 0 || y as usize >= h || xx as usize >= w {
        return T::zero();
    }
    x.data()[((s * ch + c) * h + y as usize) * w + xx as usize]
}

/// Direct nested-loop cross-correlation.
pub fn conv2d_direct<T: Float>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    spec: &ConvSpec,
) -> Tensor<T> {
    let [n, c, h, w] = x.shape()[..] else { panic!("rank-4 input") };
    let g = ConvGeometry::new(c, h, w, spec.kernel_h, spec.kernel_w, spec.stride, spec.padding)
        .expect("valid geometry");
    let k = spec.out_channels;
    let mut out = Tensor::zeros(&[n, k, g.out_h, g.out_w]);
    for s in 0..n {
        for o in 0..k {
            for oy in 0..g.out_h {
                for ox in 0..g.out_w {
                    let mut acc = bias.map_or(T::zero(), |b| b.data()[o]);
                    for ci in 0..c {
                        for ki in 0..spec.kernel_h {
                            for kj in 0..spec.kernel_w {
                                let iy = (oy * spec.stride + ki) as isize - g.pad_top as isize;
                                let ix = (ox * spec.stride + kj) as isize - g.pad_left as isize;
                                let kv = kernel.data()[((o * c + ci) * spec.kernel_h + ki) * spec.kernel_w + kj];
                                acc += kv * padded_read(x, s, ci, iy, ix);
                            }
                        }
                    }
                    out.data_mut()[((s * k + o) * g.out_h + oy) * g.out_w + ox] = acc;
                }
            }
        }
    }
    out
}

/// Depthwise convolution as `C` independent single-channel direct convolutions.
pub fn depthwise_direct<T: Float>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    kernel_hw: (usize, usize),
    stride: usize,
    padding: Padding,
) -> Tensor<T> {
    let [n, c, h, w] = x.shape()[..] else { panic!("rank-4 input") };
    let (kh, kw) = kernel_hw;
    let mut planes = Vec::new();
    for s in 0..n {
        for ch in 0..c {
            let single = Tensor::from_fn(&[1, 1, h, w], |i| x.data()[(s * c + ch) * h * w + i]);
            let k1 = Tensor::from_fn(&[1, 1, kh, kw], |i| kernel.data()[ch * kh * kw + i]);
            let b1 = bias.map(|b| Tensor::full(&[1], b.data()[ch]));
            let spec = ConvSpec {
                out_channels: 1,
                kernel_h: kh,
                kernel_w: kw,
                stride,
                padding,
                bias: b1.is_some(),
            };
            planes.push(conv2d_direct(&single, &k1, b1.as_ref(), &spec));
        }
    }
    let (oh, ow) = (planes[0].shape()[2], planes[0].shape()[3]);
    let data = planes.into_iter().flat_map(|p| p.into_data()).collect();
    Tensor::new(&[n, c, oh, ow], data).expect("consistent planes")
}
