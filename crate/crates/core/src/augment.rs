//! Resize, flips and the random affine family used for online augmentation.
//! Images are `[C, H, W]` tensors; pixel `(x, y)` is column `x`, row `y`.

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::tensor::{Float, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentRanges {
    /// Rotation drawn from `±rotation_deg`.
    pub rotation_deg: f64,
    /// Translation drawn from `±translate_frac` of the side length.
    pub translate_frac: f64,
    pub zoom: (f64, f64),
    pub shear_deg: f64,
    pub hflip_prob: f64,
    pub vflip_prob: f64,
}

impl Default for AugmentRanges {
    fn default() -> Self {
        Self {
            rotation_deg: 30.0,
            translate_frac: 0.1,
            zoom: (0.8, 1.2),
            shear_deg: 15.0,
            hflip_prob: 0.5,
            vflip_prob: 0.5,
        }
    }
}

impl AugmentRanges {
    /// Ranges that leave every image unchanged.
    pub fn none() -> Self {
        Self {
            rotation_deg: 0.0,
            translate_frac: 0.0,
            zoom: (1.0, 1.0),
            shear_deg: 0.0,
            hflip_prob: 0.0,
            vflip_prob: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.zoom;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::invalid(format!("zoom range [{lo}, {hi}] must satisfy 0 < lo <= hi")));
        }
        for (name, p) in [("hflip_prob", self.hflip_prob), ("vflip_prob", self.vflip_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("{name} = {p} is not a probability")));
            }
        }
        for (name, v) in [
            ("rotation_deg", self.rotation_deg),
            ("translate_frac", self.translate_frac),
            ("shear_deg", self.shear_deg),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("{name} = {v} must be a finite non-negative half-width")));
            }
        }
        Ok(())
    }
}

/// Forward map `p' = M (p - c) + c + t` about the image centre `c`, stored
/// as the 2×3 matrix `[M | t]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineParams {
    pub matrix: [[f64; 3]; 2],
}

impl AffineParams {
    pub const IDENTITY: AffineParams = AffineParams {
        matrix: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
    };

    /// `rotation · shear · zoom`, then translation by `(tx, ty)` pixels.
    pub fn compose(rotation_deg: f64, shear_deg: f64, zoom: f64, tx: f64, ty: f64) -> Self {
        let (s, c) = rotation_deg.to_radians().sin_cos();
        let k = shear_deg.to_radians().tan();
        // R · [[1, k], [0, 1]] · zoom
        let m = [[c * zoom, (c * k - s) * zoom], [s * zoom, (s * k + c) * zoom]];
        Self {
            matrix: [[m[0][0], m[0][1], tx], [m[1][0], m[1][1], ty]],
        }
    }

    pub fn rotation(deg: f64) -> Self {
        Self::compose(deg, 0.0, 1.0, 0.0, 0.0)
    }

    /// Horizontal shear `x' = x + factor * y`.
    pub fn shear(factor: f64) -> Self {
        Self {
            matrix: [[1.0, factor, 0.0], [0.0, 1.0, 0.0]],
        }
    }

    pub fn det(&self) -> f64 {
        let m = &self.matrix;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    /// Applies the forward map to a point given relative to the centre.
    pub fn map_point(&self, x: f64, y: f64) -> (f64, f64) {
        let m = &self.matrix;
        (m[0][0] * x + m[0][1] * y + m[0][2], m[1][0] * x + m[1][1] * y + m[1][2])
    }

    pub fn inverse(&self) -> Result<AffineParams> {
        let det = self.det();
        if !(det.abs() > 1e-9) {
            return Err(Error::invalid(format!("affine matrix is singular (det = {det:e})")));
        }
        let [[a, b, tx], [c, d, ty]] = self.matrix;
        let (ia, ib, ic, id) = (d / det, -b / det, -c / det, a / det);
        Ok(AffineParams {
            matrix: [[ia, ib, -(ia * tx + ib * ty)], [ic, id, -(ic * tx + id * ty)]],
        })
    }
}

fn lerp<T: Float>(a: T, b: T, f: T) -> T {
    a + f * (b - a)
}

fn image_dims<T: Float>(img: &Tensor<T>) -> Result<(usize, usize, usize)> {
    match *img.shape() {
        [c, h, w] => Ok((c, h, w)),
        _ => Err(Error::shape(format!("expected an image [C, H, W], got {:?}", img.shape()))),
    }
}

/// Bilinear resize to `size × size`. Corner pixels map onto corner pixels.
pub fn resize<T: Float>(img: &Tensor<T>, size: usize) -> Result<Tensor<T>> {
    if size < 1 {
        return Err(Error::invalid("resize target must be at least 1"));
    }
    let (c, h, w) = image_dims(img)?;
    if h == size && w == size {
        return Ok(img.clone());
    }
    let axis = |n_in: usize| -> Vec<(usize, usize, T)> {
        (0..size)
            .map(|i| {
                let pos = if size == 1 { 0.0 } else { i as f64 * (n_in - 1) as f64 / (size - 1) as f64 };
                let i0 = (pos.floor() as usize).min(n_in - 1);
                let i1 = (i0 + 1).min(n_in - 1);
                (i0, i1, T::from_f64(pos - i0 as f64))
            })
            .collect()
    };
    let (rows, cols) = (axis(h), axis(w));
    let src = img.data();
    let mut out = Vec::with_capacity(c * size * size);
    for ch in 0..c {
        let plane = &src[ch * h * w..(ch + 1) * h * w];
        for &(y0, y1, fy) in &rows {
            for &(x0, x1, fx) in &cols {
                let top = lerp(plane[y0 * w + x0], plane[y0 * w + x1], fx);
                let bottom = lerp(plane[y1 * w + x0], plane[y1 * w + x1], fx);
                out.push(lerp(top, bottom, fy));
            }
        }
    }
    Tensor::new(&[c, size, size], out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlipAxis {
    /// Mirror left-right.
    Horizontal,
    /// Mirror top-bottom.
    Vertical,
}

pub fn flip<T: Float>(img: &Tensor<T>, axis: FlipAxis) -> Result<Tensor<T>> {
    let (c, h, w) = image_dims(img)?;
    let src = img.data();
    let out = Tensor::from_fn(&[c, h, w], |i| {
        let (ch, y, x) = (i / (h * w), (i / w) % h, i % w);
        let (sy, sx) = match axis {
            FlipAxis::Horizontal => (y, w - 1 - x),
            FlipAxis::Vertical => (h - 1 - y, x),
        };
        src[(ch * h + sy) * w + sx]
    });
    Ok(out)
}

/// Inverse-mapped bilinear warp. Neighbours outside the image read as 0.
pub fn apply_affine<T: Float>(img: &Tensor<T>, params: &AffineParams) -> Result<Tensor<T>> {
    let (c, h, w) = image_dims(img)?;
    let inv = params.inverse()?;
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    // Source position and weights per output pixel, shared across channels.
    let taps: Vec<Option<(isize, isize, T, T)>> = (0..h * w)
        .map(|i| {
            let (x, y) = ((i % w) as f64 - cx, (i / w) as f64 - cy);
            let (sx, sy) = inv.map_point(x, y);
            let (sx, sy) = (sx + cx, sy + cy);
            if !(sx > -1.0 && sy > -1.0 && sx < w as f64 && sy < h as f64) {
                return None;
            }
            let (x0, y0) = (sx.floor(), sy.floor());
            Some((x0 as isize, y0 as isize, T::from_f64(sx - x0), T::from_f64(sy - y0)))
        })
        .collect();
    let src = img.data();
    let mut out = vec![T::zero(); c * h * w];
    for ch in 0..c {
        let plane = &src[ch * h * w..(ch + 1) * h * w];
        let at = |x: isize, y: isize| {
            if x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h {
                plane[y as usize * w + x as usize]
            } else {
                T::zero()
            }
        };
        for (i, tap) in taps.iter().enumerate() {
            if let Some((x0, y0, fx, fy)) = *tap {
                let top = lerp(at(x0, y0), at(x0 + 1, y0), fx);
                let bottom = lerp(at(x0, y0 + 1), at(x0 + 1, y0 + 1), fx);
                out[ch * h * w + i] = lerp(top, bottom, fy);
            }
        }
    }
    Tensor::new(&[c, h, w], out)
}

/// Draws flips then one affine map from `ranges` using a stream seeded by
/// `seed_parts`, and applies them in that order.
pub fn random_augment<T: Float>(img: &Tensor<T>, ranges: &AugmentRanges, seed_parts: &[u64]) -> Result<Tensor<T>> {
    let (_, h, w) = image_dims(img)?;
    let mut rng = SplitMix64::from_parts(seed_parts);
    let hflip = rng.bernoulli(ranges.hflip_prob);
    let vflip = rng.bernoulli(ranges.vflip_prob);
    let sym = |rng: &mut SplitMix64, half: f64| rng.uniform(-half, half);
    let rotation = sym(&mut rng, ranges.rotation_deg);
    let shear = sym(&mut rng, ranges.shear_deg);
    let zoom = rng.uniform(ranges.zoom.0, ranges.zoom.1);
    let tx = sym(&mut rng, ranges.translate_frac) * w as f64;
    let ty = sym(&mut rng, ranges.translate_frac) * h as f64;

    let mut out = img.clone();
    if hflip {
        out = flip(&out, FlipAxis::Horizontal)?;
    }
    if vflip {
        out = flip(&out, FlipAxis::Vertical)?;
    }
    apply_affine(&out, &AffineParams::compose(rotation, shear, zoom, tx, ty))
}
