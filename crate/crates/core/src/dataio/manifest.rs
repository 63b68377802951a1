//! `image,labels` manifests with space-separated canonical label names.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::labels::LabelVector;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRow {
    pub image: String,
    pub labels: LabelVector,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    pub rows: Vec<ManifestRow>,
}

impl Manifest {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Parses manifest text. `path` only labels errors.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let fail = |msg: String| Error::format(path, msg);
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let header = reader.headers().map_err(|e| fail(e.to_string()))?;
        if header.len() != 2 || &header[0] != "image" || &header[1] != "labels" {
            return Err(fail(format!("missing header `image,labels` (found `{}`)", header.iter().collect::<Vec<_>>().join(","))));
        }
        let mut seen = HashSet::new();
        let mut rows = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let line = i + 2;
            let record = record.map_err(|e| fail(format!("line {line}: {e}")))?;
            let image = record[0].to_string();
            if image.is_empty() {
                return Err(fail(format!("line {line}: empty image name")));
            }
            let labels = LabelVector::from_names(&record[1])
                .and_then(|l| l.check_exclusive().map(|_| l))
                .map_err(|e| fail(format!("line {line}: {e}")))?;
            if !seen.insert(image.clone()) {
                return Err(fail(format!("line {line}: duplicate image `{image}`")));
            }
            rows.push(ManifestRow { image, labels });
        }
        Ok(Self { rows })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("image,labels\n");
        for row in &self.rows {
            out.push_str(&format!("{},{}\n", row.image, row.labels));
        }
        out
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Manifest::parse(&text, path)
}

pub fn write_manifest(path: impl AsRef<Path>, manifest: &Manifest) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, manifest.to_csv()).map_err(|e| Error::io(path, e))
}
