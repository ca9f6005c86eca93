//! On-disk dataset layout.
//!
//! ```text
//! <dir>/manifest            JSON DatasetManifest
//! <dir>/samples/<id>.tensors 16-byte header + f32 LE payload
//! <dir>/labels/<id>         JSON LabelRecord
//! <dir>/drops.log           one "<snapshot_id> <rule>" line per dropped snapshot
//! ```
//!
//! Tensor header: magic `VCHT`, rank (u16 LE), reserved u16 = 0, then four
//! u16 LE dims padded with zeros past `rank`. Sample tensors have shape
//! `[2, 3, 224, 224]`: semantic then depth, channel-major.
//!
//! The content hash is SHA-256 over, per sample in manifest order, the id,
//! a newline, the tensor file bytes and the label file bytes.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::encode::{Palette, INPUT_CHANNELS, INPUT_LEN, INPUT_SIZE};
use super::filter::DropEntry;
use super::{DatasetError, Sample};
use crate::channel_stats::ChannelLabels;
use crate::geo::{haversine_m, LatLon};

pub const DATASET_FORMAT_VERSION: u32 = 1;
pub const TENSOR_MAGIC: [u8; 4] = *b"VCHT";
pub const TENSOR_HEADER_LEN: usize = 16;
pub const SAMPLE_DIMS: [u16; 4] = [2, INPUT_CHANNELS as u16, INPUT_SIZE as u16, INPUT_SIZE as u16];

/// Divisors that bring each scalar target to order-one training units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelScales {
    pub pl_db: f64,
    pub ds_ns: f64,
    pub asa_deg: f64,
    pub asd_deg: f64,
}

impl Default for LabelScales {
    fn default() -> Self {
        Self { pl_db: 100.0, ds_ns: 100.0, asa_deg: 10.0, asd_deg: 10.0 }
    }
}

/// Mean and standard deviation of the Tx–Rx haversine distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocationStats {
    pub mean_m: f64,
    pub std_m: f64,
}

impl LocationStats {
    /// Population statistics; a zero spread is replaced by 1 so
    /// standardisation stays finite.
    pub fn from_distances(d: &[f64]) -> Self {
        if d.is_empty() {
            return Self { mean_m: 0.0, std_m: 1.0 };
        }
        let n = d.len() as f64;
        let mean = d.iter().sum::<f64>() / n;
        let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        Self { mean_m: mean, std_m: if std > 0.0 { std } else { 1.0 } }
    }

    pub fn standardize(&self, distance_m: f64) -> f64 {
        (distance_m - self.mean_m) / self.std_m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub area_id: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub sample_count: usize,
    pub area_counts: BTreeMap<u32, usize>,
    pub palette: Palette,
    pub label_scales: LabelScales,
    pub location: LocationStats,
    /// Whether sky, road, vehicle and pedestrian pixels were masked.
    pub masked: bool,
    pub seeds: Vec<u64>,
    pub samples: Vec<ManifestEntry>,
    pub content_hash: String,
}

/// Per-sample label file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub snapshot_id: String,
    pub area_id: u32,
    pub tx_geo: LatLon,
    pub rx_geo: LatLon,
    pub labels: ChannelLabels,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> DatasetError {
    DatasetError::Io { path: path.display().to_string(), message: e.to_string() }
}

fn tensor_path(dir: &Path, id: &str) -> PathBuf {
    dir.join("samples").join(format!("{id}.tensors"))
}

fn label_path(dir: &Path, id: &str) -> PathBuf {
    dir.join("labels").join(id)
}

pub fn encode_tensor(dims: &[u16], data: impl Iterator<Item = f32>) -> Vec<u8> {
    assert!(dims.len() <= 4);
    let mut out = Vec::with_capacity(TENSOR_HEADER_LEN);
    out.extend_from_slice(&TENSOR_MAGIC);
    out.extend_from_slice(&(dims.len() as u16).to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    for i in 0..4 {
        out.extend_from_slice(&dims.get(i).copied().unwrap_or(0).to_le_bytes());
    }
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parses a tensor file, returning its dims and payload.
pub fn decode_tensor(bytes: &[u8], what: &str) -> Result<(Vec<u16>, Vec<f32>), DatasetError> {
    if bytes.len() < TENSOR_HEADER_LEN {
        return Err(DatasetError::Truncated(format!("{what}: {} byte header", bytes.len())));
    }
    if bytes[..4] != TENSOR_MAGIC {
        return Err(DatasetError::Format(format!("{what}: bad tensor magic")));
    }
    let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
    let rank = u16_at(4) as usize;
    if rank > 4 {
        return Err(DatasetError::Format(format!("{what}: rank {rank} > 4")));
    }
    let dims: Vec<u16> = (0..rank).map(|i| u16_at(8 + 2 * i)).collect();
    let count: usize = dims.iter().map(|&d| d as usize).product();
    let payload = &bytes[TENSOR_HEADER_LEN..];
    if payload.len() < count * 4 {
        return Err(DatasetError::Truncated(format!("{what}: {} of {} payload bytes", payload.len(), count * 4)));
    }
    if payload.len() > count * 4 {
        return Err(DatasetError::Format(format!("{what}: trailing bytes after payload")));
    }
    let data = payload.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    Ok((dims, data))
}

fn label_bytes(s: &Sample) -> Vec<u8> {
    let rec = LabelRecord {
        snapshot_id: s.snapshot_id.clone(),
        area_id: s.area_id,
        tx_geo: s.tx_geo,
        rx_geo: s.rx_geo,
        labels: s.labels.clone(),
    };
    serde_json::to_vec_pretty(&rec).expect("label record serialises")
}

fn sample_tensor_bytes(s: &Sample) -> Vec<u8> {
    encode_tensor(&SAMPLE_DIMS, s.semantic.iter().chain(s.depth.iter()).copied())
}

fn hash_sample(h: &mut Sha256, id: &str, tensor: &[u8], label: &[u8]) {
    h.update(id.as_bytes());
    h.update(b"\n");
    h.update(tensor);
    h.update(label);
}

/// Streams samples to a dataset directory; `finish` writes the manifest.
pub struct DatasetWriter {
    dir: PathBuf,
    hasher: Sha256,
    entries: Vec<ManifestEntry>,
    distances: Vec<f64>,
}

impl DatasetWriter {
    pub fn create(dir: &Path) -> Result<Self, DatasetError> {
        for sub in ["samples", "labels"] {
            fs::create_dir_all(dir.join(sub)).map_err(|e| io_err(dir, e))?;
        }
        Ok(Self { dir: dir.to_path_buf(), hasher: Sha256::new(), entries: Vec::new(), distances: Vec::new() })
    }

    pub fn push(&mut self, s: &Sample) -> Result<(), DatasetError> {
        if s.semantic.len() != INPUT_LEN || s.depth.len() != INPUT_LEN {
            return Err(DatasetError::Format(format!("{}: input tensors must hold {INPUT_LEN} values", s.snapshot_id)));
        }
        let tensor = sample_tensor_bytes(s);
        let label = label_bytes(s);
        let tp = tensor_path(&self.dir, &s.snapshot_id);
        fs::write(&tp, &tensor).map_err(|e| io_err(&tp, e))?;
        let lp = label_path(&self.dir, &s.snapshot_id);
        fs::write(&lp, &label).map_err(|e| io_err(&lp, e))?;
        hash_sample(&mut self.hasher, &s.snapshot_id, &tensor, &label);
        self.entries.push(ManifestEntry { id: s.snapshot_id.clone(), area_id: s.area_id });
        self.distances.push(s.distance_m());
        Ok(())
    }

    /// Fills in the counts, location statistics and hash of `template` and
    /// writes the manifest and drop log.
    pub fn finish(self, template: DatasetManifest, drops: &[DropEntry]) -> Result<DatasetManifest, DatasetError> {
        let mut area_counts = BTreeMap::new();
        for e in &self.entries {
            *area_counts.entry(e.area_id).or_insert(0) += 1;
        }
        let manifest = DatasetManifest {
            format_version: DATASET_FORMAT_VERSION,
            sample_count: self.entries.len(),
            area_counts,
            location: LocationStats::from_distances(&self.distances),
            samples: self.entries,
            content_hash: hex::encode(self.hasher.finalize()),
            ..template
        };
        let mp = self.dir.join("manifest");
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
        fs::write(&mp, text).map_err(|e| io_err(&mp, e))?;
        let dp = self.dir.join("drops.log");
        let mut log = fs::File::create(&dp).map_err(|e| io_err(&dp, e))?;
        for d in drops {
            let rule = serde_json::to_value(d.rule).expect("rule serialises");
            writeln!(log, "{} {}", d.snapshot_id, rule.as_str().unwrap_or("unknown")).map_err(|e| io_err(&dp, e))?;
        }
        Ok(manifest)
    }
}

/// A manifest with default palette and scales and nothing else filled in.
pub fn manifest_template(masked: bool, seeds: Vec<u64>) -> DatasetManifest {
    DatasetManifest {
        format_version: DATASET_FORMAT_VERSION,
        sample_count: 0,
        area_counts: BTreeMap::new(),
        palette: Palette::default(),
        label_scales: LabelScales::default(),
        location: LocationStats::from_distances(&[]),
        masked,
        seeds,
        samples: Vec::new(),
        content_hash: String::new(),
    }
}

pub fn write_dataset(
    samples: &[Sample],
    template: DatasetManifest,
    drops: &[DropEntry],
    dir: &Path,
) -> Result<DatasetManifest, DatasetError> {
    let mut w = DatasetWriter::create(dir)?;
    for s in samples {
        w.push(s)?;
    }
    w.finish(template, drops)
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest, DatasetError> {
    let mp = dir.join("manifest");
    let text = fs::read_to_string(&mp).map_err(|e| io_err(&mp, e))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| DatasetError::Format(format!("manifest: {e}")))?;
    let found = value.get("format_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if found != DATASET_FORMAT_VERSION {
        return Err(DatasetError::VersionMismatch { found, expected: DATASET_FORMAT_VERSION });
    }
    serde_json::from_value(value).map_err(|e| DatasetError::Format(format!("manifest: {e}")))
}

fn read_sample_files(dir: &Path, entry: &ManifestEntry) -> Result<(Sample, Vec<u8>, Vec<u8>), DatasetError> {
    let tp = tensor_path(dir, &entry.id);
    let tensor = fs::read(&tp).map_err(|e| io_err(&tp, e))?;
    let lp = label_path(dir, &entry.id);
    let label = fs::read(&lp).map_err(|e| io_err(&lp, e))?;
    let (dims, mut data) = decode_tensor(&tensor, &entry.id)?;
    if dims != SAMPLE_DIMS {
        return Err(DatasetError::Format(format!("{}: tensor dims {dims:?}", entry.id)));
    }
    let depth = data.split_off(INPUT_LEN);
    let rec: LabelRecord =
        serde_json::from_slice(&label).map_err(|e| DatasetError::Format(format!("label {}: {e}", entry.id)))?;
    let sample = Sample {
        snapshot_id: rec.snapshot_id,
        area_id: rec.area_id,
        semantic: data,
        depth,
        tx_geo: rec.tx_geo,
        rx_geo: rec.rx_geo,
        labels: rec.labels,
    };
    Ok((sample, tensor, label))
}

/// Reads every sample, calling `visit` on each, and verifies the content hash.
pub fn read_dataset_with(
    dir: &Path,
    mut visit: impl FnMut(Sample) -> Result<(), DatasetError>,
) -> Result<DatasetManifest, DatasetError> {
    let manifest = read_manifest(dir)?;
    let mut hasher = Sha256::new();
    for entry in &manifest.samples {
        let (sample, tensor, label) = read_sample_files(dir, entry)?;
        hash_sample(&mut hasher, &entry.id, &tensor, &label);
        visit(sample)?;
    }
    let actual = hex::encode(hasher.finalize());
    if actual != manifest.content_hash {
        return Err(DatasetError::HashMismatch { expected: manifest.content_hash.clone(), actual });
    }
    Ok(manifest)
}

pub fn read_dataset(dir: &Path) -> Result<(Vec<Sample>, DatasetManifest), DatasetError> {
    let mut samples = Vec::new();
    let manifest = read_dataset_with(dir, |s| {
        samples.push(s);
        Ok(())
    })?;
    Ok((samples, manifest))
}

impl Sample {
    /// Haversine Tx–Rx distance in metres.
    pub fn distance_m(&self) -> f64 {
        haversine_m(self.tx_geo, self.rx_geo)
    }
}
