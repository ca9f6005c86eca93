use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::config::{Range, SceneConfig};
use super::geometry::{Rect, Vec2};
use super::rng::{stream_rng, Stream};
use super::{Building, DynamicClass, DynamicObject, Scene, SceneError};

const PLACEMENT_ATTEMPTS: u32 = 8;
const BUILDING_LENGTH_M: (f64, f64) = (12.0, 35.0);
const BUILDING_GAP_M: (f64, f64) = (4.0, 14.0);
const BUILDING_DEPTH_M: (f64, f64) = (10.0, 20.0);
const SETBACK_M: (f64, f64) = (1.5, 3.0);
/// Half-width of the cross street kept open in the building row on the
/// Tx side, so part of every drive has line of sight.
const CROSS_STREET_HALF_M: f64 = 6.0;
const VEHICLE_RADIUS_M: f64 = 1.2;
const VEHICLE_HEIGHT_M: f64 = 1.5;
const PEDESTRIAN_RADIUS_M: f64 = 0.3;
const PEDESTRIAN_HEIGHT_M: f64 = 1.7;

fn draw(rng: &mut ChaCha8Rng, r: Range<f64>) -> f64 {
    if r.min == r.max {
        r.min
    } else {
        rng.random_range(r.min..r.max)
    }
}

fn draw_count(rng: &mut ChaCha8Rng, r: Range<u32>) -> u32 {
    rng.random_range(r.min..=r.max)
}

/// Road x-extent `(left, right)` for the street through the area centre.
pub(crate) fn road_span(cfg: &SceneConfig) -> (f64, f64) {
    let c = cfg.extent_m.0 / 2.0;
    (c - cfg.road_width_m / 2.0, c + cfg.road_width_m / 2.0)
}

/// Lays out a street canyon deterministically from `config.seed`.
pub fn generate_scene(config: &SceneConfig) -> Result<Scene, SceneError> {
    config.validate()?;
    let mut rng = stream_rng(config.seed, Stream::Scene, 0);
    let (width, length) = config.extent_m;
    let (left, right) = road_span(config);
    let tx = Vec2::new(config.tx_position_m.0, config.tx_position_m.1);
    if !(0.0..=width).contains(&tx.x) || !(0.0..=length).contains(&tx.y) {
        return Err(SceneError::InvalidConfig("tx position outside the area".into()));
    }
    let target = draw_count(&mut rng, config.building_count) as usize;

    let mut buildings = None;
    let mut last_failure = String::new();
    for attempt in 0..PLACEMENT_ATTEMPTS {
        let shrink = 0.8f64.powi(attempt as i32);
        match place_buildings(&mut rng, config, target, shrink, left, right, tx) {
            Ok(b) => {
                buildings = Some(b);
                break;
            }
            Err(why) => last_failure = why,
        }
    }
    let buildings = buildings.ok_or_else(|| SceneError::Generation(last_failure))?;

    let mut dynamics = Vec::new();
    let n_vehicles = draw_count(&mut rng, config.vehicle_count);
    let n_peds = draw_count(&mut rng, config.pedestrian_count);
    for _ in 0..n_vehicles {
        let pos = place_dynamic(&mut rng, &dynamics, length, |rng| {
            if rng.random_bool(0.5) {
                left + 1.6
            } else {
                right - 1.6
            }
        })
        .ok_or_else(|| SceneError::Generation("vehicle_count: no free parking position".into()))?;
        dynamics.push(DynamicObject {
            position: pos,
            radius_m: VEHICLE_RADIUS_M,
            height_m: VEHICLE_HEIGHT_M,
            class: DynamicClass::Vehicle,
            scattering_loss_db: draw(&mut rng, config.vehicle_scatter_loss_db),
        });
    }
    for _ in 0..n_peds {
        let pos = place_dynamic(&mut rng, &dynamics, length, |rng| {
            let off = rng.random_range(0.4..1.0);
            if rng.random_bool(0.5) {
                left - off
            } else {
                right + off
            }
        })
        .ok_or_else(|| SceneError::Generation("pedestrian_count: no free sidewalk position".into()))?;
        dynamics.push(DynamicObject {
            position: pos,
            radius_m: PEDESTRIAN_RADIUS_M,
            height_m: PEDESTRIAN_HEIGHT_M,
            class: DynamicClass::Pedestrian,
            scattering_loss_db: draw(&mut rng, config.pedestrian_scatter_loss_db),
        });
    }

    let scene = Scene {
        buildings,
        road: vec![Vec2::new(left, 0.0), Vec2::new(right, 0.0), Vec2::new(right, length), Vec2::new(left, length)],
        dynamics,
        tx,
        tx_height_m: config.tx_height_m,
        origin: config.origin,
    };
    scene.validate()?;
    Ok(scene)
}

fn place_buildings(
    rng: &mut ChaCha8Rng,
    cfg: &SceneConfig,
    target: usize,
    shrink: f64,
    left: f64,
    right: f64,
    tx: Vec2,
) -> Result<Vec<Building>, String> {
    let length = cfg.extent_m.1;
    let width = cfg.extent_m.0;
    let mut cursor = [rng.random_range(0.0..8.0), rng.random_range(0.0..8.0)];
    let mut full = [false, false];
    let mut out = Vec::with_capacity(target);
    let tx_side = if tx.x < left {
        Some(0)
    } else if tx.x > right {
        Some(1)
    } else {
        None
    };
    let (gap_lo, gap_hi) = (tx.y - CROSS_STREET_HALF_M, tx.y + CROSS_STREET_HALF_M);
    let mut side = 0usize;
    while out.len() < target {
        if full[0] && full[1] {
            return Err(format!(
                "building_count: could not place {target} buildings along a {length} m street"
            ));
        }
        if full[side] {
            side = 1 - side;
            continue;
        }
        let len = rng.random_range(BUILDING_LENGTH_M.0..BUILDING_LENGTH_M.1) * shrink;
        let gap = rng.random_range(BUILDING_GAP_M.0..BUILDING_GAP_M.1) * shrink;
        let depth = rng.random_range(BUILDING_DEPTH_M.0..BUILDING_DEPTH_M.1);
        let setback = rng.random_range(SETBACK_M.0..SETBACK_M.1);
        let y0 = cursor[side];
        let y1 = y0 + len;
        if tx_side == Some(side) && y1 > gap_lo && y0 < gap_hi {
            cursor[side] = gap_hi;
            continue;
        }
        if y1 > length {
            full[side] = true;
            continue;
        }
        cursor[side] = y1 + gap;
        let footprint = if side == 0 {
            let x1 = left - setback;
            Rect::new((x1 - depth).max(0.0), y0, x1, y1)
        } else {
            let x0 = right + setback;
            Rect::new(x0, y0, (x0 + depth).min(width), y1)
        };
        if footprint.expanded(1.0).contains(tx) {
            return Err("tx position falls inside a building footprint".into());
        }
        out.push(Building {
            footprint,
            height_m: draw(rng, cfg.building_height_m),
            reflection_loss_db: draw(rng, cfg.facade_loss_db),
        });
        side = 1 - side;
    }
    Ok(out)
}

fn place_dynamic(
    rng: &mut ChaCha8Rng,
    existing: &[DynamicObject],
    length: f64,
    x_of: impl Fn(&mut ChaCha8Rng) -> f64,
) -> Option<Vec2> {
    for _ in 0..64 {
        let y = rng.random_range(10.0f64.min(length / 2.0)..(length - 10.0).max(length / 2.0 + 1e-9));
        let p = Vec2::new(x_of(rng), y);
        if existing.iter().all(|d| d.position.dist(p) > 5.0) {
            return Some(p);
        }
    }
    None
}
