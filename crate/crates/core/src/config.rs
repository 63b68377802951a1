//! Flat `key = value` run configuration shared by every command.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::arch::{ArchId, DEFAULT_HEAD_WIDTH};
use crate::augment::AugmentRanges;
use crate::ensemble::BinarizeRule;
use crate::error::{Error, Result};
use crate::train::{TrainConfig, DEFAULT_SPLIT_RATIO, DEFAULT_SPLIT_SEED};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    /// `None` selects the architecture's default budget.
    pub epochs: Option<usize>,
    pub augment: bool,
    pub ranges: AugmentRanges,
    pub head_width: usize,
    pub split_ratio: f64,
    /// Shared by train and eval so every model sees the same test split.
    pub split_seed: u64,
    pub binarize: BinarizeRule,
    pub tiebreaker: ArchId,
    pub archs: Vec<ArchId>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            epochs: None,
            augment: true,
            ranges: AugmentRanges::default(),
            head_width: DEFAULT_HEAD_WIDTH,
            split_ratio: DEFAULT_SPLIT_RATIO,
            split_seed: DEFAULT_SPLIT_SEED,
            binarize: BinarizeRule::default(),
            tiebreaker: ArchId::XceptionMicro,
            archs: vec![ArchId::MobilenetMicro, ArchId::XceptionMicro, ArchId::InceptionresnetMicro],
        }
    }
}

pub const KEYS: &[&str] = &[
    "learning_rate",
    "batch_size",
    "epochs",
    "seed",
    "image_size",
    "head_width",
    "parallel_augment",
    "augment",
    "rotation_deg",
    "translate_frac",
    "zoom_lo",
    "zoom_hi",
    "shear_deg",
    "hflip_prob",
    "vflip_prob",
    "beta1",
    "beta2",
    "eps_adam",
    "split_ratio",
    "split_seed",
    "threshold",
    "argmax_fallback",
    "tiebreaker",
    "archs",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("`{key}`: expected true or false, got `{value}`"))),
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value;
        match key {
            "learning_rate" => self.train.adam.learning_rate = parse(key, v)?,
            "batch_size" => self.train.batch_size = parse(key, v)?,
            "epochs" => self.epochs = Some(parse(key, v)?),
            "seed" => self.train.seed = parse(key, v)?,
            "image_size" => self.train.image_size = parse(key, v)?,
            "head_width" => self.head_width = parse(key, v)?,
            "parallel_augment" => self.train.parallel_augment = parse_bool(key, v)?,
            "augment" => self.augment = parse_bool(key, v)?,
            "rotation_deg" => self.ranges.rotation_deg = parse(key, v)?,
            "translate_frac" => self.ranges.translate_frac = parse(key, v)?,
            "zoom_lo" => self.ranges.zoom.0 = parse(key, v)?,
            "zoom_hi" => self.ranges.zoom.1 = parse(key, v)?,
            "shear_deg" => self.ranges.shear_deg = parse(key, v)?,
            "hflip_prob" => self.ranges.hflip_prob = parse(key, v)?,
            "vflip_prob" => self.ranges.vflip_prob = parse(key, v)?,
            "beta1" => self.train.adam.beta1 = parse(key, v)?,
            "beta2" => self.train.adam.beta2 = parse(key, v)?,
            "eps_adam" => self.train.adam.eps = parse(key, v)?,
            "split_ratio" => self.split_ratio = parse(key, v)?,
            "split_seed" => self.split_seed = parse(key, v)?,
            "threshold" => self.binarize.threshold = parse(key, v)?,
            "argmax_fallback" => self.binarize.argmax_fallback = parse_bool(key, v)?,
            "tiebreaker" => self.tiebreaker = v.parse()?,
            "archs" => {
                self.archs = v
                    .split(',')
                    .map(|s| s.trim().parse())
                    .collect::<Result<_>>()?
            }
            _ => {
                return Err(Error::Config(format!(
                    "unknown key `{key}` (valid: {})",
                    KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("{origin}:{}: expected `key = value`", i + 1)))?;
            self.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("{origin}:{}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text, &path.display().to_string())?;
        Ok(cfg)
    }

    /// The training configuration for `arch`, with augmentation resolved.
    pub fn train_config(&self, arch: ArchId) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs.unwrap_or(arch.default_epochs()),
            augment: self.augment.then_some(self.ranges),
            ..self.train.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.ranges.validate().map_err(|e| Error::Config(e.to_string()))?;
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::Config(format!("split_ratio = {} must lie in (0, 1)", self.split_ratio)));
        }
        if self.train.image_size < 16 {
            return Err(Error::Config(format!("image_size = {} must be at least 16", self.train.image_size)));
        }
        Ok(())
    }
}
