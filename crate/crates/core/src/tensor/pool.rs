use super::{Float, Tensor};
use crate::error::{Error, Result};

/// 2×2 max pooling with stride 2. Returns the pooled tensor and, for each
/// output element, the flat input index that won (first maximum in
/// row-major window order).
pub fn max_pool2x2<T: Float>(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>)> {
    let (n, c, h, w) = x.dims4()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::shape(format!(
            "max2x2 pooling needs even spatial dims, got {h}x{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut argmax = Vec::with_capacity(out.capacity());
    let src = x.data();
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + (2 * oy) * w + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * oy + dy) * w + 2 * ox + dx;
                    if src[idx] > src[best] {
                        best = idx;
                    }
                }
                out.push(src[best]);
                argmax.push(best);
            }
        }
    }
    Ok((Tensor::new(&[n, c, oh, ow], out)?, argmax))
}

pub fn max_pool2x2_backward<T: Float>(
    dy: &Tensor<T>,
    argmax: &[usize],
    input_shape: &[usize],
) -> Result<Tensor<T>> {
    if dy.len() != argmax.len() {
        return Err(Error::shape(format!(
            "max pool backward: dY {:?} does not match cached output",
            dy.shape()
        )));
    }
    let mut dx = Tensor::zeros(input_shape);
    for (&g, &i) in dy.data().iter().zip(argmax) {
        dx.data_mut()[i] += g;
    }
    Ok(dx)
}

/// Mean over the spatial axes: `[N,C,H,W] -> [N,C]`.
pub fn global_avg_pool<T: Float>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, w) = x.dims4()?;
    let area = h * w;
    let inv = T::from_f64(1.0 / area as f64);
    let data = x
        .data()
        .chunks(area)
        .map(|plane| plane.iter().copied().sum::<T>() * inv)
        .collect();
    Tensor::new(&[n, c], data)
}

pub fn global_avg_pool_backward<T: Float>(dy: &Tensor<T>, input_shape: &[usize]) -> Result<Tensor<T>> {
    let &[n, c, h, w] = input_shape else {
        return Err(Error::shape(format!("global avg backward: bad input shape {input_shape:?}")));
    };
    dy.expect_shape(&[n, c])?;
    let area = h * w;
    let inv = T::from_f64(1.0 / area as f64);
    let mut dx = Tensor::zeros(input_shape);
    for (plane, &g) in dx.data_mut().chunks_mut(area).zip(dy.data()) {
        plane.fill(g * inv);
    }
    Ok(dx)
}
