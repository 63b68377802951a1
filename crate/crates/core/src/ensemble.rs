//! Binarization, per-label majority voting and multi-label metrics.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::arch::{ArchId, Model};
use crate::error::{Error, Result};
use crate::labels::{LabelVector, LABELS};
use crate::tensor::{Float, Tensor};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinarizeRule {
    pub threshold: f64,
    /// When no probability clears the threshold, set the argmax bit.
    pub argmax_fallback: bool,
}

impl Default for BinarizeRule {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            argmax_fallback: true,
        }
    }
}

pub fn binarize<T: Float>(probs: &[T], rule: BinarizeRule) -> LabelVector {
    let mut bits: Vec<bool> = probs.iter().map(|&p| Float::to_f64(p) >= rule.threshold).collect();
    if rule.argmax_fallback && !bits.iter().any(|&b| b) && !probs.is_empty() {
        // First index wins ties.
        let mut best = 0;
        for (i, p) in probs.iter().enumerate() {
            if *p > probs[best] {
                best = i;
            }
        }
        bits[best] = true;
    }
    LabelVector(bits)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct VoteStats {
    /// Labels decided by the tiebreaker because the vote was split evenly.
    pub tie_consults: usize,
}

/// Per-label strict majority; an exact tie copies the tiebreaker's bit.
pub fn majority_vote(votes: &[LabelVector], tiebreaker: usize) -> Result<LabelVector> {
    majority_vote_with_stats(votes, tiebreaker, &mut VoteStats::default())
}

pub fn majority_vote_with_stats(votes: &[LabelVector], tiebreaker: usize, stats: &mut VoteStats) -> Result<LabelVector> {
    let first = votes.first().ok_or_else(|| Error::invalid("majority vote needs at least one vote"))?;
    if tiebreaker >= votes.len() {
        return Err(Error::invalid(format!(
            "tiebreaker index {tiebreaker} out of range for {} votes",
            votes.len()
        )));
    }
    if let Some(v) = votes.iter().find(|v| v.len() != first.len()) {
        return Err(Error::shape(format!("vote lengths differ: {} vs {}", first.len(), v.len())));
    }
    let n = votes.len();
    let bits = (0..first.len())
        .map(|j| {
            let ones = votes.iter().filter(|v| v.get(j)).count();
            match (2 * ones).cmp(&n) {
                std::cmp::Ordering::Greater => true,
                std::cmp::Ordering::Less => false,
                std::cmp::Ordering::Equal => {
                    stats.tie_consults += 1;
                    votes[tiebreaker].get(j)
                }
            }
        })
        .collect();
    Ok(LabelVector(bits))
}

/// A hard-voting ensemble over models sharing one input shape and label set.
pub struct Ensemble<'a> {
    models: &'a [Model],
    tiebreaker: usize,
    pub rule: BinarizeRule,
}

impl<'a> Ensemble<'a> {
    /// The tiebreaker is the first model whose architecture is `tiebreaker`.
    pub fn new(models: &'a [Model], tiebreaker: ArchId, rule: BinarizeRule) -> Result<Self> {
        if models.len() < 2 {
            return Err(Error::Config(format!("an ensemble needs at least 2 models, got {}", models.len())));
        }
        let first = &models[0];
        for m in &models[1..] {
            if m.num_labels != first.num_labels || m.input_shape != first.input_shape {
                return Err(Error::Config(format!(
                    "models disagree: {} expects {:?} with {} labels, {} expects {:?} with {}",
                    first.arch, first.input_shape, first.num_labels, m.arch, m.input_shape, m.num_labels
                )));
            }
        }
        let tiebreaker = models.iter().position(|m| m.arch == tiebreaker).ok_or_else(|| {
            let present: Vec<&str> = models.iter().map(|m| m.arch.name()).collect();
            Error::Config(format!("tiebreaker {tiebreaker} is not among the models ({})", present.join(", ")))
        })?;
        Ok(Self { models, tiebreaker, rule })
    }

    pub fn tiebreaker(&self) -> usize {
        self.tiebreaker
    }

    /// Eval-mode probabilities `[N, L]` of every model, in model order.
    pub fn probabilities(&self, batch: &Tensor, parallel: bool) -> Result<Vec<Tensor>> {
        if parallel {
            self.models.par_iter().map(|m| m.predict(batch)).collect()
        } else {
            self.models.iter().map(|m| m.predict(batch)).collect()
        }
    }

    /// Binarizes each model's rows and votes per sample.
    pub fn vote(&self, probs: &[Tensor], stats: &mut VoteStats) -> Result<Vec<LabelVector>> {
        let (n, l) = probs[0].dims2()?;
        (0..n)
            .map(|i| {
                let votes: Vec<LabelVector> = probs
                    .iter()
                    .map(|p| binarize(&p.data()[i * l..(i + 1) * l], self.rule))
                    .collect();
                majority_vote_with_stats(&votes, self.tiebreaker, stats)
            })
            .collect()
    }

    pub fn predict(&self, batch: &Tensor, parallel: bool) -> Result<Vec<LabelVector>> {
        let probs = self.probabilities(batch, parallel)?;
        self.vote(&probs, &mut VoteStats::default())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LabelCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub samples: usize,
    pub subset_accuracy: f64,
    /// Fraction of individual label slots predicted correctly.
    pub hamming_accuracy: f64,
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
    pub per_label: Vec<LabelCounts>,
}

pub const METRICS_CSV_HEADER: &str = "model,accuracy,precision,recall,f1";

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

pub fn metrics(preds: &[LabelVector], truths: &[LabelVector]) -> Result<MetricsReport> {
    if preds.is_empty() {
        return Err(Error::invalid("metrics need at least one sample"));
    }
    if preds.len() != truths.len() {
        return Err(Error::shape(format!("{} predictions for {} truths", preds.len(), truths.len())));
    }
    let l = truths[0].len();
    let mut per_label = vec![LabelCounts::default(); l];
    let mut exact = 0;
    for (p, t) in preds.iter().zip(truths) {
        if p.len() != l || t.len() != l {
            return Err(Error::shape(format!("label vectors of length {} and {}, expected {l}", p.len(), t.len())));
        }
        exact += (p == t) as usize;
        for (j, c) in per_label.iter_mut().enumerate() {
            match (p.get(j), t.get(j)) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
    }
    let sum = |f: fn(&LabelCounts) -> usize| per_label.iter().map(f).sum::<usize>() as f64;
    let (tp, fp, fn_, tn) = (sum(|c| c.tp), sum(|c| c.fp), sum(|c| c.fn_), sum(|c| c.tn));
    let ratio = |num: f64, den: f64| if den == 0.0 { 0.0 } else { num / den };
    let micro_precision = ratio(tp, tp + fp);
    let micro_recall = ratio(tp, tp + fn_);
    Ok(MetricsReport {
        samples: preds.len(),
        subset_accuracy: exact as f64 / preds.len() as f64,
        hamming_accuracy: (tp + tn) / (tp + fp + fn_ + tn),
        micro_precision,
        micro_recall,
        micro_f1: f1_score(micro_precision, micro_recall),
        per_label,
    })
}

impl MetricsReport {
    /// Flat `key=value` lines; `prefix` namespaces the keys when non-empty.
    pub fn to_text(&self, prefix: &str) -> String {
        let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
        let mut s = String::new();
        let _ = writeln!(s, "{}={}", key("samples"), self.samples);
        for (k, v) in [
            ("accuracy", self.subset_accuracy),
            ("hamming_accuracy", self.hamming_accuracy),
            ("precision", self.micro_precision),
            ("recall", self.micro_recall),
            ("f1", self.micro_f1),
        ] {
            let _ = writeln!(s, "{}={v:.6}", key(k));
        }
        for (j, c) in self.per_label.iter().enumerate() {
            let name = LABELS.get(j).map(|s| s.to_string()).unwrap_or_else(|| format!("label{j}"));
            let _ = writeln!(s, "{}=tp:{} fp:{} fn:{} tn:{}", key(&format!("counts.{name}")), c.tp, c.fp, c.fn_, c.tn);
        }
        s
    }

    /// One row under [`METRICS_CSV_HEADER`].
    pub fn csv_row(&self, model: &str) -> String {
        format!(
            "{model},{:.6},{:.6},{:.6},{:.6}",
            self.subset_accuracy, self.micro_precision, self.micro_recall, self.micro_f1
        )
    }
}
