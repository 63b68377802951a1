//! Loss, optimizer, dataset split, the mini-batch loop and model files.

mod adam;
mod io;
mod loss;
mod split;

use std::fmt::Write as _;

use log::info;
use rayon::prelude::*;

use crate::arch::{ArchId, Model};
use crate::augment::{random_augment, AugmentRanges};
use crate::dataio::Dataset;
use crate::ensemble::{binarize, metrics, BinarizeRule};
use crate::error::{Error, Result};
use crate::layers::Mode;
use crate::rng::SplitMix64;
use crate::tensor::Tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use io::{load_model, model_from_bytes, model_to_bytes, save_model, FORMAT_VERSION, MAGIC};
pub use loss::{bce_loss, PROB_CLAMP};
pub use split::{split_dataset, split_indices, DEFAULT_SPLIT_RATIO, DEFAULT_SPLIT_SEED};

const SHUFFLE_STREAM: u64 = 0x5487;
const AUGMENT_STREAM: u64 = 0xa119;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// `None` disables augmentation.
    pub augment: Option<AugmentRanges>,
    pub image_size: usize,
    /// Augment the samples of a batch on the rayon pool. Output is identical
    /// to the serial path.
    pub parallel_augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            batch_size: 32,
            epochs: 10,
            seed: 0,
            augment: Some(AugmentRanges::default()),
            image_size: 256,
            parallel_augment: true,
        }
    }
}

impl TrainConfig {
    /// Defaults with the per-architecture epoch budget.
    pub fn for_arch(arch: ArchId) -> Self {
        Self {
            epochs: arch.default_epochs(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::Config(format!(
                "batch_size = {}: batchnorm needs at least 2",
                self.batch_size
            )));
        }
        if !(self.adam.learning_rate > 0.0 && self.adam.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate = {} must be positive", self.adam.learning_rate)));
        }
        if let Some(r) = &self.augment {
            r.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub subset_accuracy: f64,
    pub micro_f1: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub records: Vec<EpochRecord>,
}

impl History {
    pub const CSV_HEADER: &'static str = "epoch,loss,subset_accuracy,micro_f1";

    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for r in &self.records {
            let _ = writeln!(s, "{},{:.6},{:.6},{:.6}", r.epoch, r.loss, r.subset_accuracy, r.micro_f1);
        }
        s
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }
}

/// Mini-batches of a seeded permutation. A trailing batch of one sample is
/// dropped because batchnorm cannot normalize it.
pub fn epoch_batches(n: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    SplitMix64::from_parts(&[seed, SHUFFLE_STREAM, epoch as u64]).shuffle(&mut order);
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size).map(|c| c.to_vec()).collect();
    if batches.last().is_some_and(|b| b.len() == 1) {
        info!("epoch {epoch}: dropping a trailing batch of one sample");
        batches.pop();
    }
    batches
}

/// The augmented image of dataset sample `index` in `epoch`.
pub fn augmented_sample(ds: &Dataset, index: usize, ranges: &AugmentRanges, seed: u64, epoch: usize) -> Result<Tensor> {
    random_augment(&ds.images[index], ranges, &[seed, AUGMENT_STREAM, epoch as u64, index as u64])
}

fn batch_images(ds: &Dataset, batch: &[usize], cfg: &TrainConfig, epoch: usize) -> Result<Tensor> {
    let Some(ranges) = &cfg.augment else {
        return ds.batch(batch).map(|(x, _)| x);
    };
    let images: Vec<Tensor> = if cfg.parallel_augment {
        batch
            .par_iter()
            .map(|&i| augmented_sample(ds, i, ranges, cfg.seed, epoch))
            .collect::<Result<_>>()?
    } else {
        batch
            .iter()
            .map(|&i| augmented_sample(ds, i, ranges, cfg.seed, epoch))
            .collect::<Result<_>>()?
    };
    Tensor::stack(&images)
}

/// Runs `cfg.epochs` epochs of augment → forward → BCE → backward → Adam.
/// History metrics come from the training-mode outputs of each batch.
pub fn train(model: &mut Model, ds: &Dataset, cfg: &TrainConfig) -> Result<History> {
    cfg.validate()?;
    if ds.len() < 2 {
        return Err(Error::invalid(format!("training needs at least 2 samples, got {}", ds.len())));
    }
    if [3, ds.image_size, ds.image_size] != model.input_shape {
        return Err(Error::shape(format!(
            "dataset images are {0}x{0} but {1} expects {2:?}",
            ds.image_size, model.arch, model.input_shape
        )));
    }
    if ds.num_labels() != model.num_labels {
        return Err(Error::shape(format!(
            "dataset has {} labels, model {}",
            ds.num_labels(),
            model.num_labels
        )));
    }
    let mut state = AdamState::new(model.params().into_iter().map(|(_, p)| p));
    let mut history = History::default();
    let mut step = 0u64;
    let rule = BinarizeRule::default();
    for epoch in 0..cfg.epochs {
        let (mut loss_sum, mut seen) = (0.0, 0usize);
        let (mut preds, mut truths) = (Vec::with_capacity(ds.len()), Vec::with_capacity(ds.len()));
        for batch in epoch_batches(ds.len(), cfg.batch_size, cfg.seed, epoch) {
            let x = batch_images(ds, &batch, cfg, epoch)?;
            let y = ds.targets(&batch)?;
            let probs = model.forward(&x, Mode::Train { step })?;
            let (loss, d_prob) = bce_loss(&probs, &y)?;
            model.backward(&d_prob)?;
            adam_step(&mut model.params_mut(), &mut state, &cfg.adam)?;
            step += 1;

            loss_sum += loss * batch.len() as f64;
            seen += batch.len();
            let l = model.num_labels;
            for (row, &i) in batch.iter().enumerate() {
                preds.push(binarize(&probs.data()[row * l..(row + 1) * l], rule));
                truths.push(ds.labels[i].clone());
            }
        }
        if seen == 0 {
            continue;
        }
        let m = metrics(&preds, &truths)?;
        let record = EpochRecord {
            epoch: epoch + 1,
            loss: loss_sum / seen as f64,
            subset_accuracy: m.subset_accuracy,
            micro_f1: m.micro_f1,
        };
        info!(
            "{} epoch {}/{}: loss {:.4} subset-acc {:.4} micro-f1 {:.4}",
            model.arch, record.epoch, cfg.epochs, record.loss, record.subset_accuracy, record.micro_f1
        );
        history.records.push(record);
    }
    Ok(history)
}
