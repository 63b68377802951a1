use std::fmt;

use crate::error::{Error, Result};

/// Canonical label order, shared by manifests, model files and outputs.
pub const LABELS: [&str; 6] = ["scab", "frog_eye_leaf_spot", "rust", "powdery_mildew", "complex", "healthy"];
pub const HEALTHY: usize = 5;
pub const COMPLEX: usize = 4;

pub fn label_index(name: &str) -> Result<usize> {
    LABELS
        .iter()
        .position(|&l| l == name)
        .ok_or_else(|| Error::invalid(format!("unknown label `{name}` (valid: {})", LABELS.join(", "))))
}

/// One bit per label, in canonical order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabelVector(pub Vec<bool>);

impl LabelVector {
    pub fn zeros(len: usize) -> Self {
        Self(vec![false; len])
    }

    pub fn from_bits(bits: &[u8]) -> Self {
        Self(bits.iter().map(|&b| b != 0).collect())
    }

    /// Parses space-separated canonical names. Duplicates are rejected.
    pub fn from_names(names: &str) -> Result<Self> {
        let mut v = Self::zeros(LABELS.len());
        for name in names.split(' ').filter(|s| !s.is_empty()) {
            let i = label_index(name)?;
            if v.0[i] {
                return Err(Error::invalid(format!("label `{name}` listed twice")));
            }
            v.0[i] = true;
        }
        if !v.any() {
            return Err(Error::invalid("empty label set"));
        }
        Ok(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn any(&self) -> bool {
        self.0.iter().any(|&b| b)
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn bits(&self) -> Vec<u8> {
        self.0.iter().map(|&b| b as u8).collect()
    }

    /// Names of the set bits in canonical order. Requires a canonical-length vector.
    pub fn names(&self) -> Vec<&'static str> {
        self.0
            .iter()
            .zip(LABELS)
            .filter(|(&b, _)| b)
            .map(|(_, n)| n)
            .collect()
    }

    /// Ground-truth rule: `healthy` never co-occurs with another label.
    pub fn check_exclusive(&self) -> Result<()> {
        if self.len() == LABELS.len() && self.0[HEALTHY] && self.count() > 1 {
            return Err(Error::invalid(format!("`healthy` combined with disease labels: {}", self.names().join(" "))));
        }
        Ok(())
    }

    /// Float targets for the loss.
    pub fn to_f32(&self) -> Vec<f32> {
        self.0.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }
}

impl fmt::Display for LabelVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.names().join(" "))
    }
}
