use serde::{Deserialize, Serialize};

use crate::geo::LatLon;
use super::SceneError;

pub const SCENE_CONFIG_VERSION: u32 = 1;

/// Inclusive `[min, max]` range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range<T> {
    pub min: T,
    pub max: T,
}

impl<T: PartialOrd + Copy> Range<T> {
    pub const fn new(min: T, max: T) -> Self {
        Self { min, max }
    }

    pub fn is_valid(&self) -> bool {
        self.min <= self.max
    }
}

/// Generation parameters for one synthetic street-canyon area.
///
/// The street runs north along the centre of a `width × length` area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub version: u32,
    pub seed: u64,
    /// `(width east–west, length north–south)` in metres.
    pub extent_m: (f64, f64),
    pub road_width_m: f64,
    pub building_count: Range<u32>,
    pub building_height_m: Range<f64>,
    pub facade_loss_db: Range<f64>,
    pub vehicle_count: Range<u32>,
    pub pedestrian_count: Range<u32>,
    pub vehicle_scatter_loss_db: Range<f64>,
    pub pedestrian_scatter_loss_db: Range<f64>,
    pub tx_position_m: (f64, f64),
    pub tx_height_m: f64,
    pub rx_height_m: f64,
    pub max_speed_kmh: f64,
    pub origin: LatLon,
    pub d_max_m: f64,
    pub dynamic_range_db: f64,
    pub max_paths: usize,
    /// Bound on per-modality timestamp jitter around the pose time.
    pub jitter_s: f64,
    pub snapshot_interval_s: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            version: SCENE_CONFIG_VERSION,
            seed: 0,
            extent_m: (80.0, 300.0),
            road_width_m: 14.0,
            building_count: Range::new(10, 16),
            building_height_m: Range::new(10.0, 40.0),
            facade_loss_db: Range::new(4.0, 12.0),
            vehicle_count: Range::new(2, 6),
            pedestrian_count: Range::new(2, 8),
            vehicle_scatter_loss_db: Range::new(6.0, 12.0),
            pedestrian_scatter_loss_db: Range::new(12.0, 18.0),
            tx_position_m: (6.0, 45.0),
            tx_height_m: 33.0,
            rx_height_m: 2.7,
            max_speed_kmh: 20.0,
            origin: LatLon::new(39.95, 116.34),
            d_max_m: 150.0,
            dynamic_range_db: 30.0,
            max_paths: 32,
            jitter_s: 0.04,
            snapshot_interval_s: 0.5,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<(), SceneError> {
        let bad = |what: &str| Err(SceneError::InvalidConfig(what.to_string()));
        if self.version != SCENE_CONFIG_VERSION {
            return bad(&format!("unsupported scene config version {}", self.version));
        }
        if !(self.extent_m.0 > 0.0 && self.extent_m.1 > 0.0) {
            return bad("extent must be positive");
        }
        if !(self.road_width_m > 0.0 && self.road_width_m < self.extent_m.0) {
            return bad("road width must be positive and narrower than the area");
        }
        if !(self.building_count.is_valid()
            && self.building_height_m.is_valid()
            && self.facade_loss_db.is_valid()
            && self.vehicle_count.is_valid()
            && self.pedestrian_count.is_valid()
            && self.vehicle_scatter_loss_db.is_valid()
            && self.pedestrian_scatter_loss_db.is_valid())
        {
            return bad("every range needs min <= max");
        }
        if self.building_height_m.min <= 0.0 {
            return bad("building heights must be positive");
        }
        if !(self.d_max_m > 0.0) {
            return bad("d_max must be positive");
        }
        if !(self.max_speed_kmh > 0.0) || !(self.snapshot_interval_s > 0.0) {
            return bad("speed cap and snapshot interval must be positive");
        }
        if self.max_paths == 0 || !(self.dynamic_range_db > 0.0) {
            return bad("max paths and dynamic range must be positive");
        }
        if !(self.jitter_s >= 0.0) {
            return bad("jitter bound must be non-negative");
        }
        if !(self.tx_height_m > 0.0 && self.rx_height_m > 0.0) {
            return bad("antenna heights must be positive");
        }
        Ok(())
    }

    pub fn max_speed_ms(&self) -> f64 {
        self.max_speed_kmh / 3.6
    }

    pub fn from_toml_str(s: &str) -> Result<Self, SceneError> {
        let cfg: SceneConfig = toml::from_str(s).map_err(|e| SceneError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("scene config serialises")
    }
}
