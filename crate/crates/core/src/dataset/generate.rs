//! Synthetic multi-area dataset generation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::filter::{filter_invalid, DropEntry, DropRule, FilterRules};
use super::io::{manifest_template, DatasetManifest, DatasetWriter};
use super::sync::{synchronize, MAX_SYNC_OFFSET_S};
use super::{DatasetError, Palette, Sample};
use crate::scene::rng::mix_seed;
use crate::scene::{generate_scene, make_snapshot, sample_trajectory, RawSnapshot, SceneConfig};

pub const DATASET_CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaSpec {
    pub id: u32,
    pub tx_height_m: f64,
    /// Overrides `DatasetConfig::snapshots_per_area`.
    #[serde(default)]
    pub snapshots: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub version: u32,
    pub seed: u64,
    pub snapshots_per_area: usize,
    pub areas: Vec<AreaSpec>,
    /// Template for every area; its seed and Tx height are overridden.
    pub scene: SceneConfig,
    pub filter: FilterRules,
    pub max_offset_s: f64,
    /// Also write the dynamic-masked variant under `<out>/masked`.
    pub write_masked: bool,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        let area = |id, tx_height_m| AreaSpec { id, tx_height_m, snapshots: None };
        Self {
            version: DATASET_CONFIG_VERSION,
            seed: 0,
            snapshots_per_area: 250,
            areas: vec![area(1, 33.0), area(2, 34.0), area(3, 34.0), area(4, 3.0)],
            scene: SceneConfig::default(),
            filter: FilterRules::default(),
            max_offset_s: MAX_SYNC_OFFSET_S,
            write_masked: true,
        }
    }
}

impl DatasetConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, DatasetError> {
        let cfg: Self = toml::from_str(s).map_err(|e| DatasetError::Format(format!("dataset config: {e}")))?;
        if cfg.version != DATASET_CONFIG_VERSION {
            return Err(DatasetError::VersionMismatch { found: cfg.version, expected: DATASET_CONFIG_VERSION });
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("dataset config serialises")
    }

    pub fn area_scene(&self, area: &AreaSpec) -> SceneConfig {
        SceneConfig { seed: mix_seed(self.seed, area.id as u64), tx_height_m: area.tx_height_m, ..self.scene.clone() }
    }
}

/// Simulates one area's drive and returns its raw snapshots in time order.
pub fn generate_area(cfg: &DatasetConfig, area: &AreaSpec) -> Result<Vec<RawSnapshot>, DatasetError> {
    let scene_cfg = cfg.area_scene(area);
    let scene = generate_scene(&scene_cfg)?;
    let n = area.snapshots.unwrap_or(cfg.snapshots_per_area);
    let poses = sample_trajectory(&scene, n, &scene_cfg)?;
    Ok(poses.iter().enumerate().map(|(i, p)| make_snapshot(&scene, p, &scene_cfg, area.id, i)).collect())
}

/// Re-assembles snapshots from independently timestamped streams: the
/// channel record supplies the identity and MPCs, the matched image record
/// the panorama, the matched GPS record the receiver position.
fn align(raw: Vec<RawSnapshot>, max_offset_s: f64) -> (Vec<RawSnapshot>, Vec<DropEntry>) {
    let channel: Vec<f64> = raw.iter().map(|s| s.timestamps.channel_s).collect();
    let image: Vec<f64> = raw.iter().map(|s| s.timestamps.image_s).collect();
    let gps: Vec<f64> = raw.iter().map(|s| s.timestamps.gps_s).collect();
    let triplets = synchronize(&channel, &image, &gps, max_offset_s);
    let mut matched = vec![false; raw.len()];
    let mut out = Vec::with_capacity(triplets.len());
    for t in &triplets {
        matched[t.channel] = true;
        let mut s = raw[t.channel].clone();
        s.panorama = raw[t.image].panorama.clone();
        s.timestamps.image_s = raw[t.image].timestamps.image_s;
        s.rx_geo = raw[t.gps].rx_geo;
        s.timestamps.gps_s = raw[t.gps].timestamps.gps_s;
        out.push(s);
    }
    let drops = raw
        .iter()
        .zip(&matched)
        .filter(|(_, m)| !**m)
        .map(|(s, _)| DropEntry { snapshot_id: s.snapshot_id.clone(), rule: DropRule::Unsynchronized })
        .collect();
    (out, drops)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedDataset {
    pub manifest: DatasetManifest,
    pub masked_manifest: Option<DatasetManifest>,
    pub drops: Vec<DropEntry>,
}

/// Generates every area, synchronizes, filters and writes the dataset to
/// `out` (and the masked variant to `out/masked` when configured).
pub fn build_dataset(cfg: &DatasetConfig, out: &Path) -> Result<GeneratedDataset, DatasetError> {
    let palette = Palette::default();
    let mut writer = DatasetWriter::create(out)?;
    let masked_dir = out.join("masked");
    let mut masked_writer = if cfg.write_masked { Some(DatasetWriter::create(&masked_dir)?) } else { None };
    let mut drops = Vec::new();
    let mut seeds = Vec::new();
    for area in &cfg.areas {
        seeds.push(cfg.area_scene(area).seed);
        let (aligned, unsynced) = align(generate_area(cfg, area)?, cfg.max_offset_s);
        drops.extend(unsynced);
        let (kept, filtered) = filter_invalid(aligned, &cfg.filter);
        drops.extend(filtered);
        for raw in &kept {
            writer.push(&Sample::from_snapshot(raw, false, &palette)?)?;
            if let Some(w) = masked_writer.as_mut() {
                w.push(&Sample::from_snapshot(raw, true, &palette)?)?;
            }
        }
    }
    let manifest = writer.finish(manifest_template(false, seeds.clone()), &drops)?;
    let masked_manifest = match masked_writer {
        Some(w) => Some(w.finish(manifest_template(true, seeds), &drops)?),
        None => None,
    };
    Ok(GeneratedDataset { manifest, masked_manifest, drops })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::read_dataset;
    use crate::scene::SemanticClass;

    fn small(seed: u64) -> DatasetConfig {
        let area = |id, tx_height_m| AreaSpec { id, tx_height_m, snapshots: Some(12) };
        DatasetConfig { seed, areas: vec![area(1, 33.0), area(4, 3.0)], ..Default::default() }
    }

    #[test]
    fn same_seed_same_hash() {
        let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let a = build_dataset(&small(7), d1.path()).unwrap();
        let b = build_dataset(&small(7), d2.path()).unwrap();
        assert_eq!(a.manifest.content_hash, b.manifest.content_hash);
        assert_eq!(a.masked_manifest.as_ref().unwrap().content_hash, b.masked_manifest.unwrap().content_hash);
        assert_eq!(a.manifest.sample_count, 24);
        let c = build_dataset(&small(8), tempfile::tempdir().unwrap().path()).unwrap();
        assert_ne!(a.manifest.content_hash, c.manifest.content_hash);
    }

    #[test]
    fn masked_variant_pairs_with_raw() {
        let dir = tempfile::tempdir().unwrap();
        build_dataset(&small(3), dir.path()).unwrap();
        let (raw, _) = read_dataset(dir.path()).unwrap();
        let (masked, mm) = read_dataset(&dir.path().join("masked")).unwrap();
        assert!(mm.masked);
        let palette = Palette::default();
        let banned: Vec<[f32; 3]> = [SemanticClass::Sky, SemanticClass::Road, SemanticClass::Vehicle, SemanticClass::Pedestrian]
            .iter()
            .map(|c| palette.color_f32(*c as u8).unwrap())
            .collect();
        let plane = crate::dataset::INPUT_SIZE * crate::dataset::INPUT_SIZE;
        for (r, m) in raw.iter().zip(&masked) {
            assert_eq!(r.snapshot_id, m.snapshot_id);
            assert_eq!(r.labels, m.labels);
            for i in 0..plane {
                let px = [m.semantic[i], m.semantic[plane + i], m.semantic[2 * plane + i]];
                assert!(!banned.contains(&px));
            }
        }
    }

    #[test]
    fn config_toml_round_trip() {
        let cfg = small(5);
        assert_eq!(DatasetConfig::from_toml_str(&cfg.to_toml_string()).unwrap(), cfg);
        let partial = DatasetConfig::from_toml_str("seed = 9\nsnapshots_per_area = 10\n").unwrap();
        assert_eq!(partial.seed, 9);
        assert_eq!(partial.areas.len(), 4);
    }
}
