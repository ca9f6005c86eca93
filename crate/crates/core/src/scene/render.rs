use super::geometry::{ray_circle, wrap_deg, Vec2};
use super::{Panorama, RxPose, Scene, SemanticClass};

pub const PANORAMA_WIDTH: usize = 360;
pub const PANORAMA_HEIGHT: usize = 100;
/// Elevation of the top edge of the cropped band; the band spans
/// `[ELEVATION_TOP_DEG − 100°, ELEVATION_TOP_DEG]`.
pub const ELEVATION_TOP_DEG: f64 = 85.0;
const RAY_MAX_M: f64 = 10_000.0;

struct Hit {
    dist: f64,
    bottom_deg: f64,
    top_deg: f64,
    class: SemanticClass,
}

/// Every object the ray enters, nearest first.
fn hits_along(scene: &Scene, origin: Vec2, dir: Vec2, cam_h: f64) -> Vec<Hit> {
    let hit = |dist: f64, height: f64, class: SemanticClass| Hit {
        dist,
        bottom_deg: (-cam_h).atan2(dist).to_degrees(),
        top_deg: (height - cam_h).atan2(dist).to_degrees(),
        class,
    };
    let mut hits: Vec<Hit> = scene
        .buildings
        .iter()
        .filter_map(|b| b.footprint.ray_entry(origin, dir, RAY_MAX_M).map(|d| hit(d, b.height_m, SemanticClass::Building)))
        .chain(scene.dynamics.iter().filter_map(|o| {
            ray_circle(origin, dir, o.position, o.radius_m).map(|d| hit(d, o.height_m, o.class.semantic()))
        }))
        .collect();
    hits.sort_by(|a, b| a.dist.total_cmp(&b.dist));
    hits
}

/// Ray-cast panorama in the receiver's vehicle frame.
///
/// Each column casts one horizontal ray through the centre of its 1° bin.
/// A pixel shows the nearest object whose elevation span covers the pixel
/// row, so taller objects remain visible above shorter ones in front. Rows
/// not covered by any object are sky above the horizon and road below it,
/// the latter at ground-intersection depth.
pub fn render_panorama(scene: &Scene, pose: &RxPose, d_max_m: f64) -> Panorama {
    let (h, w) = (PANORAMA_HEIGHT, PANORAMA_WIDTH);
    let mut semantic = vec![SemanticClass::Sky as u8; h * w];
    let mut depth = vec![1.0f32; h * w];
    let cam_h = pose.height_m;
    let norm = |d: f64| (d / d_max_m).clamp(0.0, 1.0) as f32;
    for col in 0..w {
        let dir = Vec2::from_bearing(wrap_deg(pose.heading_deg + col as f64 + 0.5));
        let hits = hits_along(scene, pose.position, dir, cam_h);
        for row in 0..h {
            let el = ELEVATION_TOP_DEG - (row as f64 + 0.5);
            let idx = row * w + col;
            if let Some(hit) = hits.iter().find(|x| el >= x.bottom_deg && el <= x.top_deg) {
                semantic[idx] = hit.class as u8;
                depth[idx] = norm(hit.dist);
            } else if el < 0.0 {
                semantic[idx] = SemanticClass::Road as u8;
                depth[idx] = norm(cam_h / (-el).to_radians().tan());
            }
        }
    }
    Panorama { height: h, width: w, semantic, depth }
}
