//! Synthetic V2I street-canyon simulator.
//!
//! A seeded generator lays out buildings and dynamic objects along a
//! north-running street. For each receiver pose it renders a cropped
//! semantic/depth panorama and traces single-bounce multipath components
//! (line of sight, facade specular reflections via the image method, and
//! point scattering off vehicles and pedestrians).

mod config;
mod generate;
pub mod geometry;
mod render;
pub mod rng;
mod snapshot;
mod trace;
mod trajectory;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::LatLon;

pub use config::{Range, SceneConfig, SCENE_CONFIG_VERSION};
pub use generate::generate_scene;
pub use geometry::{Rect, Vec2};
pub use render::{render_panorama, PANORAMA_HEIGHT, PANORAMA_WIDTH, ELEVATION_TOP_DEG};
pub use snapshot::{make_snapshot, RawSnapshot, Timestamps};
pub use trace::{has_line_of_sight, trace_mpcs, CARRIER_HZ, SPEED_OF_LIGHT, WAVELENGTH_M};
pub use trajectory::sample_trajectory;

#[derive(Debug, Error, PartialEq)]
pub enum SceneError {
    #[error("invalid scene config: {0}")]
    InvalidConfig(String),
    #[error("scene generation failed: {0}")]
    Generation(String),
    #[error("road too short: {0}")]
    RoadTooShort(String),
    #[error("scene invariant violated: {0}")]
    Invariant(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum SemanticClass {
    Void = 0,
    Sky = 1,
    Road = 2,
    Building = 3,
    Vehicle = 4,
    Pedestrian = 5,
}

impl SemanticClass {
    pub const ALL: [SemanticClass; 6] = [
        SemanticClass::Void,
        SemanticClass::Sky,
        SemanticClass::Road,
        SemanticClass::Building,
        SemanticClass::Vehicle,
        SemanticClass::Pedestrian,
    ];

    pub fn from_id(id: u8) -> Option<Self> {
        Self::ALL.get(id as usize).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Building {
    pub footprint: Rect,
    pub height_m: f64,
    pub reflection_loss_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DynamicClass {
    Vehicle,
    Pedestrian,
}

impl DynamicClass {
    pub fn semantic(self) -> SemanticClass {
        match self {
            DynamicClass::Vehicle => SemanticClass::Vehicle,
            DynamicClass::Pedestrian => SemanticClass::Pedestrian,
        }
    }
}

/// A vehicle or pedestrian, modelled as a vertical cylinder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicObject {
    pub position: Vec2,
    pub radius_m: f64,
    pub height_m: f64,
    pub class: DynamicClass,
    pub scattering_loss_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub buildings: Vec<Building>,
    /// Road polygon vertices (counter-clockwise).
    pub road: Vec<Vec2>,
    pub dynamics: Vec<DynamicObject>,
    pub tx: Vec2,
    pub tx_height_m: f64,
    pub origin: LatLon,
}

impl Scene {
    pub fn road_bounds(&self) -> Rect {
        let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for v in &self.road {
            x0 = x0.min(v.x);
            y0 = y0.min(v.y);
            x1 = x1.max(v.x);
            y1 = y1.max(v.y);
        }
        Rect::new(x0, y0, x1, y1)
    }

    pub fn without_dynamics(&self) -> Scene {
        Scene { dynamics: Vec::new(), ..self.clone() }
    }

    /// Human-readable geometry dump.
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serialises")
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let road = self.road_bounds();
        for (i, b) in self.buildings.iter().enumerate() {
            if b.footprint.overlaps(&road) {
                return Err(SceneError::Invariant(format!("building {i} overlaps the road")));
            }
            if b.footprint.contains(self.tx) {
                return Err(SceneError::Invariant(format!("tx inside building {i}")));
            }
            for (j, o) in self.buildings.iter().enumerate().skip(i + 1) {
                if b.footprint.overlaps(&o.footprint) {
                    return Err(SceneError::Invariant(format!("buildings {i} and {j} overlap")));
                }
            }
        }
        // "Beside the road" means within a sidewalk-sized margin.
        let near_road = road.expanded(4.0);
        for (i, d) in self.dynamics.iter().enumerate() {
            if !near_road.contains(d.position) {
                return Err(SceneError::Invariant(format!("dynamic object {i} is away from the road")));
            }
            if self.buildings.iter().any(|b| b.footprint.expanded(d.radius_m).contains(d.position)) {
                return Err(SceneError::Invariant(format!("dynamic object {i} intersects a building")));
            }
        }
        Ok(())
    }
}

/// Receiver pose. `heading_deg` is the compass bearing of travel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RxPose {
    pub position: Vec2,
    pub heading_deg: f64,
    pub height_m: f64,
    pub timestamp_s: f64,
}

/// Cropped panorama: row 0 is the top elevation, column `k` looks along
/// vehicle-frame azimuth `[k, k+1)` degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panorama {
    pub height: usize,
    pub width: usize,
    pub semantic: Vec<u8>,
    /// Relative depth in `[0, 1]`, 1 = farthest.
    pub depth: Vec<f32>,
}

impl Panorama {
    pub fn class_at(&self, row: usize, col: usize) -> u8 {
        self.semantic[row * self.width + col]
    }

    pub fn depth_at(&self, row: usize, col: usize) -> f32 {
        self.depth[row * self.width + col]
    }

    pub fn count_class(&self, class: SemanticClass) -> usize {
        self.semantic.iter().filter(|&&c| c == class as u8).count()
    }
}
