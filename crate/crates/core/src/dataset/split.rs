use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::io::DatasetManifest;
use super::DatasetError;
use crate::scene::rng::{stream_rng, Stream};

/// Sample indices (into the manifest order) of each partition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Holds out every sample of `test_area`; the rest is shuffled by `seed`
/// and the last `round(val_fraction · n)` become validation.
pub fn split_by_area(
    manifest: &DatasetManifest,
    test_area: u32,
    val_fraction: f64,
    seed: u64,
) -> Result<Split, DatasetError> {
    if !manifest.samples.iter().any(|e| e.area_id == test_area) {
        return Err(DatasetError::UnknownArea(test_area));
    }
    if !(0.0..=1.0).contains(&val_fraction) {
        return Err(DatasetError::Format(format!("val_fraction {val_fraction} outside [0, 1]")));
    }
    let (test, mut rest): (Vec<usize>, Vec<usize>) =
        (0..manifest.samples.len()).partition(|&i| manifest.samples[i].area_id == test_area);
    rest.shuffle(&mut stream_rng(seed, Stream::Split, test_area as u64));
    let n_val = (val_fraction * rest.len() as f64).round() as usize;
    let val = rest.split_off(rest.len() - n_val);
    Ok(Split { train: rest, val, test })
}
