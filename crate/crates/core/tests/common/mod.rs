#![allow(dead_code)]

use leafvote::arch::Model;
use leafvote::gradcheck::{projected_partial, rel_error, rel_error_floor};
use leafvote::layers::{Layer, Mode};
use leafvote::rng::SplitMix64;
use leafvote::Tensor;

pub fn random_tensor(shape: &[usize], rng: &mut SplitMix64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.uniform(-1.0, 1.0))
}

/// Worst relative error between backward and central differences for the
/// scalar `<w, layer(inputs)>`, over every input and parameter entry.
pub fn layer_gradcheck(layer: &mut Layer<f64>, inputs: &[Tensor<f64>], h: f64, seed: u64) -> f64 {
    let mut rng = SplitMix64::new(seed);
    let refs: Vec<&Tensor<f64>> = inputs.iter().collect();
    let y = layer.forward_train(&refs, 0).unwrap();
    let w = random_tensor(y.shape(), &mut rng);
    let dxs = layer.backward(&w).unwrap();
    let param_grads: Vec<Tensor<f64>> = layer.params().iter().map(|p| p.grad.clone()).collect();

    let mut worst = 0.0f64;
    for (k, input) in inputs.iter().enumerate() {
        let mut flat = input.data().to_vec();
        for i in 0..flat.len() {
            let num = projected_partial(&mut flat, i, h, w.data(), |v| {
                let mut ins = inputs.to_vec();
                ins[k] = Tensor::new(input.shape(), v.to_vec()).unwrap();
                let r: Vec<&Tensor<f64>> = ins.iter().collect();
                layer.forward_train(&r, 0).unwrap().into_data()
            });
            worst = worst.max(rel_error(dxs[k].data()[i], num));
        }
    }
    for (p, grad) in param_grads.iter().enumerate() {
        let mut flat = layer.params()[p].value.data().to_vec();
        for i in 0..flat.len() {
            let num = projected_partial(&mut flat, i, h, w.data(), |v| {
                layer.params_mut()[p].value.data_mut().copy_from_slice(v);
                layer.forward_train(&refs, 0).unwrap().into_data()
            });
            layer.params_mut()[p].value.data_mut().copy_from_slice(&flat);
            worst = worst.max(rel_error(grad.data()[i], num));
        }
    }
    worst
}

/// Moves every parameter off its initialization: biases and batchnorm
/// shifts start at exactly zero, which parks ReLUs on their kink.
pub fn jitter_params(model: &mut Model<f64>, seed: u64) {
    let mut rng = SplitMix64::new(seed);
    for p in model.params_mut() {
        for v in p.value.data_mut() {
            *v += rng.uniform(-0.1, 0.1);
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ModelCheck {
    pub worst: f64,
    pub checked: usize,
    /// Coordinates rejected because `x ± h` straddled a ReLU or max-pool kink.
    pub straddled: usize,
}

/// Whole-model check on `<w, model(x)>` in train mode at a fixed step, over
/// `per_tensor` random entries of every parameter tensor and of the input.
/// Denominators are floored at `floor`: a whole-network forward carries
/// rounding noise near 1e-10 in the difference quotient, so exact-zero
/// gradients (biases feeding batchnorm) need a floor above that.
/// Coordinates whose `±h` probes land in a different linear region than the
/// base point are redrawn: the central difference is no derivative there.
pub fn model_gradcheck(model: &mut Model<f64>, x: &Tensor<f64>, h: f64, floor: f64, per_tensor: usize, seed: u64) -> ModelCheck {
    let mut rng = SplitMix64::new(seed);
    let mode = Mode::Train { step: 0 };
    let y = model.forward(x, mode).unwrap();
    let base_region = model.region_fingerprint();
    let w = random_tensor(y.shape(), &mut rng);
    let dx = model.backward(&w).unwrap();
    let grads: Vec<Tensor<f64>> = model.params().iter().map(|(_, p)| p.grad.clone()).collect();

    let mut report = ModelCheck { worst: 0.0, checked: 0, straddled: 0 };
    // Slot 0 is the input, slot p + 1 parameter tensor p.
    for slot in 0..=grads.len() {
        let (mut flat, analytic, shape) = if slot == 0 {
            (x.data().to_vec(), dx.clone(), x.shape().to_vec())
        } else {
            let p = &model.params()[slot - 1].1.value;
            (p.data().to_vec(), grads[slot - 1].clone(), p.shape().to_vec())
        };
        let wanted = per_tensor.min(flat.len());
        let mut done = 0;
        let mut attempts = 0;
        while done < wanted && attempts < 20 * wanted {
            attempts += 1;
            let i = rng.below(flat.len());
            let mut same_region = true;
            let num = projected_partial(&mut flat, i, h, w.data(), |v| {
                let out = if slot == 0 {
                    model.forward(&Tensor::new(&shape, v.to_vec()).unwrap(), mode).unwrap()
                } else {
                    model.params_mut()[slot - 1].value.data_mut().copy_from_slice(v);
                    model.forward(x, mode).unwrap()
                };
                same_region &= model.region_fingerprint() == base_region;
                out.into_data()
            });
            if slot > 0 {
                model.params_mut()[slot - 1].value.data_mut().copy_from_slice(&flat);
            }
            if !same_region {
                report.straddled += 1;
                continue;
            }
            report.worst = report.worst.max(rel_error_floor(analytic.data()[i], num, floor));
            report.checked += 1;
            done += 1;
        }
    }
    report
}

/// Published (precision, recall, F1) rows: five single backbones, then the
/// seven three-model ensembles.
pub const PUBLISHED_PRF: [(f64, f64, f64); 12] = [
    (0.8278, 0.8873, 0.8552),
    (0.8674, 0.8940, 0.8802),
    (0.8454, 0.9048, 0.8737),
    (0.8708, 0.8847, 0.8773),
    (0.8489, 0.8799, 0.8622),
    (0.8873, 0.9080, 0.8972),
    (0.8901, 0.9026, 0.8962),
    (0.8882, 0.9062, 0.8967),
    (0.8848, 0.9069, 0.8956),
    (0.8894, 0.9016, 0.8951),
    (0.8854, 0.9018, 0.8934),
    (0.8905, 0.9100, 0.9001),
];

/// Naive per-label majority: count ones, compare with half, defer ties.
pub fn naive_vote(votes: &[Vec<u8>], tiebreaker: usize) -> Vec<u8> {
    let n = votes.len();
    (0..votes[0].len())
        .map(|j| {
            let ones: usize = votes.iter().map(|v| v[j] as usize).sum();
            let zeros = n - ones;
            if ones > zeros {
                1
            } else if zeros > ones {
                0
            } else {
                votes[tiebreaker][j]
            }
        })
        .collect()
}

/// Every assignment of `models × labels` bits, decoded from a counter.
pub fn all_vote_sets(models: usize, labels: usize) -> impl Iterator<Item = Vec<Vec<u8>>> {
    (0u64..1 << (models * labels)).map(move |code| {
        (0..models)
            .map(|m| (0..labels).map(|j| (code >> (m * labels + j) & 1) as u8).collect())
            .collect()
    })
}
