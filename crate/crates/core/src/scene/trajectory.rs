use super::config::SceneConfig;
use super::generate::road_span;
use super::geometry::{wrap_deg, Vec2};
use super::{RxPose, Scene, SceneError};

const END_MARGIN_M: f64 = 5.0;
const LANE_OFFSET_M: f64 = 3.5;
/// Slower traversal would be indistinguishable from a stop.
const MIN_SPEED_MS: f64 = 1.0;

/// Drives north in the east lane, U-turns, and returns south, emitting a
/// pose every `snapshot_interval_s` at constant speed.
pub fn sample_trajectory(scene: &Scene, n: usize, config: &SceneConfig) -> Result<Vec<RxPose>, SceneError> {
    if n == 0 {
        return Err(SceneError::RoadTooShort("at least one pose is required".into()));
    }
    let road = scene.road_bounds();
    let (left, right) = if scene.road.is_empty() { road_span(config) } else { (road.min.x, road.max.x) };
    let centre = (left + right) / 2.0;
    let lane = LANE_OFFSET_M.min((right - left) / 4.0);
    let y0 = road.min.y + END_MARGIN_M;
    let y1 = road.max.y - END_MARGIN_M;
    let straight = (y1 - y0).max(0.0);
    let turn = std::f64::consts::PI * lane;
    let route = 2.0 * straight + turn;
    let dt = config.snapshot_interval_s;
    let speed = if n == 1 { 0.0 } else { config.max_speed_ms().min(route / ((n - 1) as f64 * dt)) };
    if n > 1 && speed < MIN_SPEED_MS {
        return Err(SceneError::RoadTooShort(format!(
            "{n} poses need {:.1} m of route at {MIN_SPEED_MS} m/s but the loop is {route:.1} m",
            (n - 1) as f64 * dt * MIN_SPEED_MS
        )));
    }
    let at = |s: f64| -> (Vec2, f64) {
        if s <= straight {
            (Vec2::new(centre + lane, y0 + s), 0.0)
        } else if s <= straight + turn {
            let theta = (s - straight) / lane;
            let p = Vec2::new(centre + lane * theta.cos(), y1 + lane * theta.sin());
            (p, wrap_deg(-theta.to_degrees()))
        } else {
            let back = (s - straight - turn).min(straight);
            (Vec2::new(centre - lane, y1 - back), 180.0)
        }
    };
    Ok((0..n)
        .map(|i| {
            let (position, heading_deg) = at(i as f64 * speed * dt);
            RxPose { position, heading_deg, height_m: config.rx_height_m, timestamp_s: i as f64 * dt }
        })
        .collect())
}
