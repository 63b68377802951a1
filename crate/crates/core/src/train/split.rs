use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

pub const DEFAULT_SPLIT_RATIO: f64 = 0.8;
pub const DEFAULT_SPLIT_SEED: u64 = 2021;
const SPLIT_STREAM: u64 = 0x5911;

/// Seeded permutation of `0..n`; the first `round(n·ratio)` entries train.
pub fn split_indices(n: usize, ratio: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n == 0 {
        return Err(Error::invalid("cannot split an empty dataset"));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::invalid(format!("split ratio {ratio} must lie in (0, 1)")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    SplitMix64::from_parts(&[seed, SPLIT_STREAM]).shuffle(&mut order);
    let n_train = (n as f64 * ratio).round() as usize;
    let test = order.split_off(n_train);
    Ok((order, test))
}

pub fn split_dataset(ds: &Dataset, ratio: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (train, test) = split_indices(ds.len(), ratio, seed)?;
    Ok((ds.subset(&train), ds.subset(&test)))
}
