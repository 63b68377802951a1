//! Manifests, the PPM codec, the synthetic generator and in-memory datasets.

pub mod manifest;
pub mod ppm;
pub mod synthetic;

use std::path::Path;

use crate::augment::resize;
use crate::error::{Error, Result};
use crate::labels::{LabelVector, LABELS};
use crate::tensor::Tensor;

pub use manifest::{load_manifest, write_manifest, Manifest, ManifestRow};
pub use ppm::{decode_ppm, encode_ppm, read_image, write_image};
pub use synthetic::{gen_synthetic, synthetic_sample, MANIFEST_NAME};

/// Images resized to a common square size, with their label vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub names: Vec<String>,
    /// `[3, S, S]` each.
    pub images: Vec<Tensor<f32>>,
    pub labels: Vec<LabelVector>,
    pub image_size: usize,
}

impl Dataset {
    pub fn new(names: Vec<String>, images: Vec<Tensor<f32>>, labels: Vec<LabelVector>) -> Result<Self> {
        if images.len() != labels.len() || images.len() != names.len() {
            return Err(Error::shape(format!(
                "{} names, {} images and {} label vectors",
                names.len(),
                images.len(),
                labels.len()
            )));
        }
        let image_size = match images.first().map(|t| t.shape()) {
            Some(&[3, h, w]) if h == w => h,
            Some(other) => return Err(Error::shape(format!("dataset images must be [3, S, S], got {other:?}"))),
            None => 0,
        };
        if let Some(t) = images.iter().find(|t| t.shape() != [3, image_size, image_size]) {
            return Err(Error::shape(format!(
                "mixed image shapes {:?} and [3, {image_size}, {image_size}]",
                t.shape()
            )));
        }
        Ok(Self {
            names,
            images,
            labels,
            image_size,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn num_labels(&self) -> usize {
        self.labels.first().map_or(LABELS.len(), |l| l.len())
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            names: indices.iter().map(|&i| self.names[i].clone()).collect(),
            images: indices.iter().map(|&i| self.images[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i].clone()).collect(),
            image_size: self.image_size,
        }
    }

    /// Stacks the selected samples into `[N, 3, S, S]` and `[N, L]`.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor<f32>, Tensor<f32>)> {
        let images: Vec<Tensor<f32>> = indices.iter().map(|&i| self.images[i].clone()).collect();
        Ok((Tensor::stack(&images)?, self.targets(indices)?))
    }

    pub fn targets(&self, indices: &[usize]) -> Result<Tensor<f32>> {
        let l = self.num_labels();
        let data: Vec<f32> = indices.iter().flat_map(|&i| self.labels[i].to_f32()).collect();
        Tensor::new(&[indices.len(), l], data)
    }
}

/// Reads `dir/manifest.csv` and every listed image, resized to `image_size`.
pub fn load_dataset(dir: impl AsRef<Path>, image_size: usize) -> Result<Dataset> {
    let dir = dir.as_ref();
    let manifest = load_manifest(dir.join(MANIFEST_NAME))?;
    if manifest.is_empty() {
        return Err(Error::format(dir.join(MANIFEST_NAME), "manifest lists no images"));
    }
    let mut names = Vec::with_capacity(manifest.len());
    let mut images = Vec::with_capacity(manifest.len());
    let mut labels = Vec::with_capacity(manifest.len());
    for row in manifest.rows {
        let img = read_image(dir.join(&row.image))?;
        images.push(resize(&img, image_size)?);
        names.push(row.image);
        labels.push(row.labels);
    }
    Dataset::new(names, images, labels)
}
