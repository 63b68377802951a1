//! Python bindings. Images and batches cross the boundary as flat
//! row-major float lists plus an explicit shape, so no numpy is required.

use std::collections::HashMap;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use leafvote::arch::{build_with_seed, ArchId, Model, DEFAULT_HEAD_WIDTH};
use leafvote::augment::{resize, AugmentRanges};
use leafvote::dataio::{gen_synthetic as gen, load_dataset, read_image as read};
use leafvote::ensemble::{binarize, f1_score as f1, majority_vote as vote, metrics as score, BinarizeRule, Ensemble};
use leafvote::labels::{LabelVector, LABELS};
use leafvote::train::{load_model, save_model, split_dataset, split_indices as split, train as fit, TrainConfig};
use leafvote::{Error, Tensor};

fn py_err(e: Error) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyIOError::new_err(e.to_string())
    }
}

fn arch(name: &str) -> PyResult<ArchId> {
    name.parse().map_err(py_err)
}

fn rows(t: &Tensor, width: usize) -> Vec<Vec<f32>> {
    t.data().chunks(width).map(<[f32]>::to_vec).collect()
}

/// A trained or freshly initialised micro model.
#[pyclass(name = "Model", module = "leafvote_py")]
struct PyModel {
    inner: Model,
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (arch_name, image_size, num_labels = LABELS.len(), head_width = DEFAULT_HEAD_WIDTH, seed = 0))]
    fn new(arch_name: &str, image_size: usize, num_labels: usize, head_width: usize, seed: u64) -> PyResult<Self> {
        let inner = build_with_seed(arch(arch_name)?, [3, image_size, image_size], num_labels, head_width, seed)
            .map_err(py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: load_model(path).map_err(py_err)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        save_model(&self.inner, path).map_err(py_err)
    }

    #[getter]
    fn arch(&self) -> &'static str {
        self.inner.arch.name()
    }

    #[getter]
    fn input_shape(&self) -> (usize, usize, usize) {
        let [c, h, w] = self.inner.input_shape;
        (c, h, w)
    }

    #[getter]
    fn num_labels(&self) -> usize {
        self.inner.num_labels
    }

    fn param_count(&self) -> usize {
        self.inner.param_count()
    }

    /// Eval-mode probabilities for `batch` images given as one flat list.
    fn predict(&self, data: Vec<f32>, batch: usize) -> PyResult<Vec<Vec<f32>>> {
        let [c, h, w] = self.inner.input_shape;
        let x = Tensor::new(&[batch, c, h, w], data).map_err(py_err)?;
        let p = self.inner.predict(&x).map_err(py_err)?;
        Ok(rows(&p, self.inner.num_labels))
    }

    /// Trains in place on the training split of a dataset directory and
    /// returns one dict per epoch.
    #[pyo3(signature = (data_dir, epochs, batch_size = 32, learning_rate = 1e-4, seed = 0, augment = true))]
    fn train(
        &mut self,
        data_dir: &str,
        epochs: usize,
        batch_size: usize,
        learning_rate: f64,
        seed: u64,
        augment: bool,
    ) -> PyResult<Vec<HashMap<&'static str, f64>>> {
        let size = self.inner.input_shape[1];
        let ds = load_dataset(data_dir, size).map_err(py_err)?;
        let (train_set, _) = split_dataset(&ds, 0.8, leafvote::train::DEFAULT_SPLIT_SEED).map_err(py_err)?;
        let mut cfg = TrainConfig {
            batch_size,
            epochs,
            seed,
            image_size: size,
            augment: augment.then(AugmentRanges::default),
            ..TrainConfig::default()
        };
        cfg.adam.learning_rate = learning_rate;
        let hist = fit(&mut self.inner, &train_set, &cfg).map_err(py_err)?;
        Ok(hist
            .records
            .iter()
            .map(|r| {
                HashMap::from([
                    ("epoch", r.epoch as f64),
                    ("loss", r.loss),
                    ("subset_accuracy", r.subset_accuracy),
                    ("micro_f1", r.micro_f1),
                ])
            })
            .collect())
    }
}

/// Writes `n` synthetic leaf images plus manifest.csv; returns the image count.
#[pyfunction]
fn gen_synthetic(out_dir: &str, n: usize, size: usize, seed: u64) -> PyResult<usize> {
    Ok(gen(n, size, seed, out_dir).map_err(py_err)?.len())
}

/// Reads a P6 PPM resized to `size`, returning `(shape, flat data)`.
#[pyfunction]
#[pyo3(signature = (path, size = None))]
fn read_image(path: &str, size: Option<usize>) -> PyResult<(Vec<usize>, Vec<f32>)> {
    let mut img = read(path).map_err(py_err)?;
    if let Some(s) = size {
        img = resize(&img, s).map_err(py_err)?;
    }
    Ok((img.shape().to_vec(), img.into_data()))
}

#[pyfunction]
fn split_indices(n: usize, ratio: f64, seed: u64) -> PyResult<(Vec<usize>, Vec<usize>)> {
    split(n, ratio, seed).map_err(py_err)
}

#[pyfunction]
fn f1_score(precision: f64, recall: f64) -> f64 {
    f1(precision, recall)
}

/// Per-label majority vote over 0/1 vectors; ties defer to `tiebreaker`.
#[pyfunction]
fn majority_vote(votes: Vec<Vec<u8>>, tiebreaker: usize) -> PyResult<Vec<u32>> {
    let votes: Vec<LabelVector> = votes.iter().map(|v| LabelVector::from_bits(v)).collect();
    // Widened so Python sees a list of ints rather than bytes.
    Ok(vote(&votes, tiebreaker).map_err(py_err)?.bits().into_iter().map(u32::from).collect())
}

/// Micro metrics of 0/1 predictions against 0/1 ground truth.
#[pyfunction]
fn metrics(preds: Vec<Vec<u8>>, truths: Vec<Vec<u8>>) -> PyResult<HashMap<&'static str, f64>> {
    let p: Vec<LabelVector> = preds.iter().map(|v| LabelVector::from_bits(v)).collect();
    let t: Vec<LabelVector> = truths.iter().map(|v| LabelVector::from_bits(v)).collect();
    let r = score(&p, &t).map_err(py_err)?;
    Ok(HashMap::from([
        ("subset_accuracy", r.subset_accuracy),
        ("hamming_accuracy", r.hamming_accuracy),
        ("precision", r.micro_precision),
        ("recall", r.micro_recall),
        ("f1", r.micro_f1),
    ]))
}

/// Ensemble label names for one image file.
#[pyfunction]
#[pyo3(signature = (models, tiebreaker, image_path, threshold = 0.5))]
fn ensemble_predict(models: Vec<PyRef<'_, PyModel>>, tiebreaker: &str, image_path: &str, threshold: f64) -> PyResult<Vec<&'static str>> {
    let owned: Vec<Model> = models.iter().map(|m| m.inner.clone()).collect();
    let rule = BinarizeRule { threshold, ..BinarizeRule::default() };
    let first = owned.first().ok_or_else(|| PyValueError::new_err("no models"))?;
    let size = first.input_shape[1];
    let img = resize(&read(image_path).map_err(py_err)?, size).map_err(py_err)?;
    let x = img.reshape(&[1, 3, size, size]).map_err(py_err)?;
    let labels = if owned.len() == 1 {
        binarize(first.predict(&x).map_err(py_err)?.data(), rule)
    } else {
        let ens = Ensemble::new(&owned, arch(tiebreaker)?, rule).map_err(py_err)?;
        ens.predict(&x, true).map_err(py_err)?.remove(0)
    };
    Ok(labels.names())
}

#[pymodule]
fn leafvote_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("LABELS", LABELS.to_vec())?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(gen_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(read_image, m)?)?;
    m.add_function(wrap_pyfunction!(split_indices, m)?)?;
    m.add_function(wrap_pyfunction!(f1_score, m)?)?;
    m.add_function(wrap_pyfunction!(majority_vote, m)?)?;
    m.add_function(wrap_pyfunction!(metrics, m)?)?;
    m.add_function(wrap_pyfunction!(ensemble_predict, m)?)?;
    Ok(())
}
