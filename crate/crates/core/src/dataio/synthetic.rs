//! Deterministic synthetic leaf images, one recipe per class.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::labels::{label_index, LabelVector, LABELS};
use crate::rng::SplitMix64;
use crate::tensor::Tensor;

use super::manifest::{write_manifest, Manifest, ManifestRow};
use super::ppm::write_image;

pub const MIN_SAMPLES: usize = 12;
pub const MIN_SIZE: usize = 16;
pub const MANIFEST_NAME: &str = "manifest.csv";

/// Sample `i` belongs to `CLASSES[i % 6]`.
pub const CLASSES: [&str; 6] = ["healthy", "rust", "scab", "frog_eye_leaf_spot", "powdery_mildew", "complex"];
const DISEASES: [&str; 4] = ["rust", "scab", "frog_eye_leaf_spot", "powdery_mildew"];

type Rgb = [f32; 3];

struct Canvas {
    size: usize,
    px: Vec<Rgb>,
}

impl Canvas {
    fn disc(&mut self, cx: f64, cy: f64, r: f64, mut paint: impl FnMut(&mut Rgb, f64)) {
        let lo_y = (cy - r).floor().max(0.0) as usize;
        let lo_x = (cx - r).floor().max(0.0) as usize;
        let hi_y = ((cy + r).ceil() as usize).min(self.size - 1);
        let hi_x = ((cx + r).ceil() as usize).min(self.size - 1);
        for y in lo_y..=hi_y {
            for x in lo_x..=hi_x {
                let d = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
                if d <= r {
                    paint(&mut self.px[y * self.size + x], d / r);
                }
            }
        }
    }

    /// One-pixel stroke from `(x0, y0)` to `(x1, y1)`.
    fn line(&mut self, (x0, y0): (f64, f64), (x1, y1): (f64, f64), color: Rgb) {
        let steps = ((x1 - x0).abs().max((y1 - y0).abs()) * 2.0).ceil().max(1.0) as usize;
        for s in 0..=steps {
            let t = s as f64 / steps as f64;
            let (x, y) = ((x0 + t * (x1 - x0)).round(), (y0 + t * (y1 - y0)).round());
            if x >= 0.0 && y >= 0.0 && (x as usize) < self.size && (y as usize) < self.size {
                self.px[y as usize * self.size + x as usize] = color;
            }
        }
    }
}

fn jitter(rng: &mut SplitMix64, base: Rgb, amount: f64) -> Rgb {
    base.map(|c| c + rng.uniform(-amount, amount) as f32)
}

fn spot(rng: &mut SplitMix64, size: usize, margin: f64) -> (f64, f64) {
    let s = size as f64;
    (rng.uniform(margin, s - 1.0 - margin), rng.uniform(margin, s - 1.0 - margin))
}

fn radius(size: usize, lo: f64, hi: f64, rng: &mut SplitMix64) -> f64 {
    (size as f64 * rng.uniform(lo, hi)).max(1.0)
}

/// Green field with a midrib and lateral veins.
fn healthy_leaf(c: &mut Canvas, rng: &mut SplitMix64) {
    let s = c.size as f64;
    let green = jitter(rng, [0.22, 0.56, 0.16], 0.05);
    let tilt = rng.uniform(-0.3, 0.3);
    for (i, p) in c.px.iter_mut().enumerate() {
        let y = (i / c.size) as f32 / s as f32;
        *p = [green[0], green[1] - 0.08 * y, green[2]];
    }
    let vein = jitter(rng, [0.1, 0.3, 0.07], 0.02);
    let mid = |t: f64| (s / 2.0 + tilt * (t - s / 2.0), t);
    c.line(mid(0.0), mid(s - 1.0), vein);
    let laterals = 3 + rng.below(2);
    for k in 0..laterals {
        let t = s * (k as f64 + 1.0) / (laterals as f64 + 1.0);
        let (x, y) = mid(t);
        let reach = s * rng.uniform(0.3, 0.45);
        c.line((x, y), (x - reach, y - reach * 0.6), vein);
        c.line((x, y), (x + reach, y - reach * 0.6), vein);
    }
}

fn rust(c: &mut Canvas, rng: &mut SplitMix64, count: usize) {
    for _ in 0..count {
        let r = radius(c.size, 0.08, 0.13, rng);
        let (x, y) = spot(rng, c.size, r);
        let color = jitter(rng, [0.95, 0.55, 0.1], 0.04);
        c.disc(x, y, r, |p, _| *p = color);
    }
}

fn scab(c: &mut Canvas, rng: &mut SplitMix64, count: usize) {
    for _ in 0..count {
        let (x, y) = spot(rng, c.size, c.size as f64 * 0.1);
        let color = jitter(rng, [0.2, 0.17, 0.08], 0.03);
        for _ in 0..3 + rng.below(3) {
            let r = radius(c.size, 0.05, 0.09, rng);
            let (dx, dy) = (rng.uniform(-1.5, 1.5) * r, rng.uniform(-1.5, 1.5) * r);
            c.disc(x + dx, y + dy, r, |p, _| *p = color);
        }
    }
}

fn frog_eye(c: &mut Canvas, rng: &mut SplitMix64, count: usize) {
    for _ in 0..count {
        let r = radius(c.size, 0.11, 0.16, rng).max(2.0);
        let (x, y) = spot(rng, c.size, r);
        let ring = jitter(rng, [0.5, 0.25, 0.1], 0.04);
        let centre = jitter(rng, [0.9, 0.85, 0.65], 0.04);
        c.disc(x, y, r, |p, d| *p = if d <= 0.5 { centre } else { ring });
    }
}

fn powdery(c: &mut Canvas, rng: &mut SplitMix64, count: usize) {
    for _ in 0..count {
        let r = radius(c.size, 0.14, 0.22, rng);
        let (x, y) = spot(rng, c.size, r * 0.5);
        let alpha = rng.uniform(0.55, 0.7) as f32;
        c.disc(x, y, r, |p, _| *p = p.map(|v| v + alpha * (0.97 - v)));
    }
}

fn paint_disease(c: &mut Canvas, rng: &mut SplitMix64, disease: &str, count: usize) {
    match disease {
        "rust" => rust(c, rng, count),
        "scab" => scab(c, rng, count),
        "frog_eye_leaf_spot" => frog_eye(c, rng, count),
        "powdery_mildew" => powdery(c, rng, count),
        other => unreachable!("no recipe for {other}"),
    }
}

/// Renders sample `index` of a dataset generated with `seed`.
pub fn synthetic_sample(index: usize, size: usize, seed: u64) -> (Tensor<f32>, LabelVector) {
    let mut rng = SplitMix64::from_parts(&[seed, index as u64]);
    let mut canvas = Canvas {
        size,
        px: vec![[0.0; 3]; size * size],
    };
    healthy_leaf(&mut canvas, &mut rng);
    let class = CLASSES[index % CLASSES.len()];
    let mut labels = vec![class];
    match class {
        "healthy" => {}
        "complex" => {
            let mut pool = DISEASES;
            rng.shuffle(&mut pool);
            let k = 2 + rng.below(2);
            let chosen = &mut pool[..k];
            // Mildew is translucent; painted first it never washes out other lesions.
            chosen.sort_by_key(|&d| d != "powdery_mildew");
            for &d in chosen.iter() {
                let count = 2 + rng.below(2);
                paint_disease(&mut canvas, &mut rng, d, count);
                labels.push(d);
            }
        }
        d => {
            // Same per-disease load as a complex leaf, which therefore carries
            // more lesions overall.
            let count = 2 + rng.below(2);
            paint_disease(&mut canvas, &mut rng, d, count);
        }
    }
    let plane = size * size;
    let mut data = vec![0.0f32; 3 * plane];
    for (p, rgb) in canvas.px.iter().enumerate() {
        for ch in 0..3 {
            let noise = rng.uniform(-0.03, 0.03) as f32;
            data[ch * plane + p] = (rgb[ch] + noise).clamp(0.0, 1.0);
        }
    }
    let mut bits = vec![false; LABELS.len()];
    for l in labels {
        bits[label_index(l).expect("recipe labels are canonical")] = true;
    }
    (Tensor::new(&[3, size, size], data).expect("shape matches data"), LabelVector(bits))
}

pub fn image_name(index: usize) -> String {
    format!("synth_{index:05}.ppm")
}

/// Writes `n` PPM images plus `manifest.csv` into `out_dir`.
pub fn gen_synthetic(n: usize, size: usize, seed: u64, out_dir: impl AsRef<Path>) -> Result<Manifest> {
    if n < MIN_SAMPLES {
        return Err(Error::invalid(format!("n = {n}: need n >= {MIN_SAMPLES}")));
    }
    if size < MIN_SIZE {
        return Err(Error::invalid(format!("size = {size}: need size >= {MIN_SIZE}")));
    }
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = Manifest::default();
    for i in 0..n {
        let (img, labels) = synthetic_sample(i, size, seed);
        let name = image_name(i);
        write_image(dir.join(&name), &img)?;
        manifest.rows.push(ManifestRow { image: name, labels });
    }
    write_manifest(dir.join(MANIFEST_NAME), &manifest)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recipes_respect_label_rules() {
        for i in 0..60 {
            let (img, labels) = synthetic_sample(i, 24, 3);
            assert_eq!(img.shape(), &[3, 24, 24]);
            assert!(img.data().iter().all(|v| (0.0..=1.0).contains(v)));
            labels.check_exclusive().unwrap();
            if CLASSES[i % 6] == "complex" {
                let diseases = labels.names().iter().filter(|n| DISEASES.contains(n)).count();
                assert!(diseases >= 2 && !labels.names().contains(&"healthy"));
            } else {
                assert_eq!(labels.names(), [CLASSES[i % 6]]);
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let (a, _) = synthetic_sample(7, 20, 11);
        let (b, _) = synthetic_sample(7, 20, 11);
        let (c, _) = synthetic_sample(7, 20, 12);
        assert_eq!(a.data(), b.data());
        assert_ne!(a.data(), c.data());
    }
}
