//! In-memory dataset, batching and the frozen-feature cache.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::{Array3, Array4, Axis};
use vichan_core::dataset::{read_dataset, DatasetManifest, LocationStats, Sample, INPUT_CHANNELS, INPUT_SIZE};
use vichan_net::{BackboneKind, Batch, ChannelPredictor, Modality, ModelConfig, Target};

use crate::error::Result;

/// Early-stage features are a pure function of the backbone, its
/// initialisation seed and the images, so arms that share these share a cache.
type CacheKey = (BackboneKind, u64);

pub struct DataContext {
    pub dir: PathBuf,
    pub manifest: DatasetManifest,
    pub samples: Vec<Sample>,
    cache: HashMap<CacheKey, Arc<Vec<Array3<f32>>>>,
}

pub const CACHE_BATCH: usize = 16;

impl DataContext {
    pub fn load(dir: &Path) -> Result<Self> {
        let (samples, manifest) = read_dataset(dir)?;
        Ok(Self { dir: dir.to_path_buf(), manifest, samples, cache: HashMap::new() })
    }

    pub fn from_samples(dir: &Path, manifest: DatasetManifest, samples: Vec<Sample>) -> Self {
        Self { dir: dir.to_path_buf(), manifest, samples, cache: HashMap::new() }
    }

    /// Location standardisation from the given (training) samples.
    pub fn location_stats(&self, idx: &[usize]) -> LocationStats {
        let d: Vec<f64> = idx.iter().map(|&i| self.samples[i].distance_m()).collect();
        LocationStats::from_distances(&d)
    }

    /// Early-stage semantic features for every sample, computed once per
    /// backbone and seed. `None` when the model's early stages train.
    pub fn semantic_cache(&mut self, model: &mut ChannelPredictor, seed: u64) -> Option<Arc<Vec<Array3<f32>>>> {
        if !model.config.frozen_stages || !model.config.has(Modality::Semantic) {
            return None;
        }
        let key = (model.config.backbone, seed);
        if let Some(c) = self.cache.get(&key) {
            return Some(c.clone());
        }
        let all: Vec<usize> = (0..self.samples.len()).collect();
        let mut feats = Vec::with_capacity(all.len());
        for chunk in all.chunks(CACHE_BATCH) {
            let f = model.semantic_features(&images(&self.samples, chunk, |s| &s.semantic))?;
            feats.extend(f.axis_iter(Axis(0)).map(|v| v.to_owned()));
        }
        let feats = Arc::new(feats);
        self.cache.insert(key, feats.clone());
        Some(feats)
    }

    pub fn clear_cache(&mut self) {
        self.cache.clear();
    }
}

fn images(samples: &[Sample], idx: &[usize], view: impl Fn(&Sample) -> &Vec<f32>) -> Array4<f32> {
    let len = INPUT_CHANNELS * INPUT_SIZE * INPUT_SIZE;
    let mut data = Vec::with_capacity(idx.len() * len);
    for &i in idx {
        data.extend_from_slice(view(&samples[i]));
    }
    Array4::from_shape_vec((idx.len(), INPUT_CHANNELS, INPUT_SIZE, INPUT_SIZE), data).expect("encoded inputs are 3×224×224")
}

/// Assembles the inputs the model's active modalities need.
pub fn make_batch(samples: &[Sample], idx: &[usize], config: &ModelConfig, cache: Option<&[Array3<f32>]>) -> Batch {
    let mut batch = Batch::default();
    if config.has(Modality::Semantic) {
        match cache {
            Some(c) => {
                let views: Vec<_> = idx.iter().map(|&i| c[i].view().insert_axis(Axis(0))).collect();
                batch.semantic_features = Some(ndarray::concatenate(Axis(0), &views).expect("cached features agree"));
            }
            None => batch.semantic = Some(images(samples, idx, |s| &s.semantic)),
        }
    }
    if config.has(Modality::Depth) {
        batch.depth = Some(images(samples, idx, |s| &s.depth));
    }
    if config.has(Modality::Location) {
        batch.locations = Some(idx.iter().map(|&i| (samples[i].tx_geo, samples[i].rx_geo)).collect());
    }
    batch
}

/// Physical-unit targets, one row per sample.
pub fn physical_targets(samples: &[Sample], idx: &[usize], target: Target) -> Vec<Vec<f64>> {
    idx.iter().map(|&i| target.values(&samples[i].labels)).collect()
}
