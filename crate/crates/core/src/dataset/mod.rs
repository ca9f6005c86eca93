//! Snapshot → dataset pipeline: synchronization, filtering, masking,
//! encoding, serialization and area splits.

mod encode;
mod filter;
mod generate;
mod io;
mod split;
mod sync;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel_stats::{labels_from_mpcs, ChannelLabels, StatsError};
use crate::geo::LatLon;
use crate::scene::{RawSnapshot, SceneError};

pub use encode::{encode_inputs, mask_dynamic, Palette, INPUT_CHANNELS, INPUT_LEN, INPUT_SIZE, MASKED_CLASSES};
pub use filter::{filter_invalid, DropEntry, DropRule, FilterRules};
pub use generate::{build_dataset, generate_area, AreaSpec, DatasetConfig, GeneratedDataset, DATASET_CONFIG_VERSION};
pub use io::{
    decode_tensor, encode_tensor, manifest_template, read_dataset, read_dataset_with, read_manifest, write_dataset,
    DatasetManifest, DatasetWriter, LabelRecord, LabelScales, LocationStats, ManifestEntry, DATASET_FORMAT_VERSION,
    SAMPLE_DIMS, TENSOR_HEADER_LEN, TENSOR_MAGIC,
};
pub use split::{split_by_area, Split};
pub use sync::{synchronize, Triplet, MAX_SYNC_OFFSET_S};

#[derive(Debug, Error, PartialEq)]
pub enum DatasetError {
    #[error("i/o error at {path}: {message}")]
    Io { path: String, message: String },
    #[error("dataset format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("content hash mismatch: manifest {expected}, payload {actual}")]
    HashMismatch { expected: String, actual: String },
    #[error("truncated tensor file: {0}")]
    Truncated(String),
    #[error("malformed dataset: {0}")]
    Format(String),
    #[error("unknown semantic class id {0}")]
    UnknownClass(u8),
    #[error("unknown area {0}")]
    UnknownArea(u32),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Scene(#[from] SceneError),
}

/// One model-ready record: encoded views, coordinates and targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub snapshot_id: String,
    pub area_id: u32,
    /// `3 × 224 × 224` palette RGB in `[0, 1]`.
    pub semantic: Vec<f32>,
    /// `3 × 224 × 224` replicated relative depth in `[0, 1]`.
    pub depth: Vec<f32>,
    pub tx_geo: LatLon,
    pub rx_geo: LatLon,
    pub labels: ChannelLabels,
}

impl Sample {
    /// Labels the snapshot's channel and encodes its (optionally masked) views.
    pub fn from_snapshot(raw: &RawSnapshot, masked: bool, palette: &Palette) -> Result<Sample, DatasetError> {
        let labels = labels_from_mpcs(&raw.mpcs)?;
        labels.check()?;
        let (semantic, depth) = if masked {
            encode_inputs(&mask_dynamic(&raw.panorama), palette)?
        } else {
            encode_inputs(&raw.panorama, palette)?
        };
        Ok(Sample {
            snapshot_id: raw.snapshot_id.clone(),
            area_id: raw.area_id,
            semantic,
            depth,
            tx_geo: raw.tx_geo,
            rx_geo: raw.rx_geo,
            labels,
        })
    }
}
