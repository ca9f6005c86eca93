use std::f64::consts::{PI, TAU};

use crate::channel_stats::{Mpc, MpcSet};

use super::config::SceneConfig;
use super::geometry::{bearing_deg, mirror, segment_intersection, wrap_deg, Vec2};
use super::{RxPose, Scene};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const CARRIER_HZ: f64 = 4.85e9;
pub const WAVELENGTH_M: f64 = SPEED_OF_LIGHT / CARRIER_HZ;
/// Penetration loss per building crossed by the fallback direct path.
const PENETRATION_LOSS_DB: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PathKind {
    Direct,
    Specular,
    Scatter,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    kind: PathKind,
    length_m: f64,
    loss_db: f64,
    depart_to: Vec2,
    arrive_from: Vec2,
    extra_phase: f64,
}

impl Candidate {
    fn amplitude(&self) -> f64 {
        WAVELENGTH_M / (4.0 * PI * self.length_m) * 10f64.powf(-self.loss_db / 20.0)
    }
}

fn blocked(scene: &Scene, a: Vec2, b: Vec2, skip: Option<usize>) -> bool {
    scene
        .buildings
        .iter()
        .enumerate()
        .any(|(i, bl)| Some(i) != skip && bl.footprint.intersects_segment(a, b))
}

/// True when the 2-D Tx–Rx segment clears every building footprint.
pub fn has_line_of_sight(scene: &Scene, rx: Vec2) -> bool {
    !blocked(scene, scene.tx, rx, None)
}

fn length_3d(planar: f64, dh: f64) -> f64 {
    planar.hypot(dh)
}

/// Single-bounce multipath for one receiver pose, strongest first.
pub fn trace_mpcs(scene: &Scene, pose: &RxPose, config: &SceneConfig, snapshot_id: &str) -> MpcSet {
    let tx = scene.tx;
    let rx = pose.position;
    let dh = scene.tx_height_m - pose.height_m;
    let mut candidates = Vec::new();

    if has_line_of_sight(scene, rx) {
        candidates.push(Candidate {
            kind: PathKind::Direct,
            length_m: length_3d(tx.dist(rx), dh),
            loss_db: 0.0,
            depart_to: rx,
            arrive_from: tx,
            extra_phase: 0.0,
        });
    }

    for (bi, b) in scene.buildings.iter().enumerate() {
        for f in b.footprint.facades() {
            // Both terminals must be in front of the facade.
            if tx.sub(f.a).dot(f.normal) <= 0.0 || rx.sub(f.a).dot(f.normal) <= 0.0 {
                continue;
            }
            let image = mirror(tx, &f);
            let Some(p) = segment_intersection(image, rx, f.a, f.b) else { continue };
            if blocked(scene, tx, p, Some(bi)) || blocked(scene, p, rx, Some(bi)) {
                continue;
            }
            candidates.push(Candidate {
                kind: PathKind::Specular,
                length_m: length_3d(image.dist(rx), dh),
                loss_db: b.reflection_loss_db,
                depart_to: p,
                arrive_from: p,
                extra_phase: PI,
            });
        }
    }

    for o in &scene.dynamics {
        if o.position.dist(rx) <= o.radius_m || o.position.dist(tx) <= o.radius_m {
            continue;
        }
        if blocked(scene, tx, o.position, None) || blocked(scene, o.position, rx, None) {
            continue;
        }
        candidates.push(Candidate {
            kind: PathKind::Scatter,
            length_m: length_3d(tx.dist(o.position) + o.position.dist(rx), dh),
            loss_db: o.scattering_loss_db,
            depart_to: o.position,
            arrive_from: o.position,
            extra_phase: 0.0,
        });
    }

    if candidates.is_empty() {
        let crossed = scene.buildings.iter().filter(|b| b.footprint.intersects_segment(tx, rx)).count();
        candidates.push(Candidate {
            kind: PathKind::Direct,
            length_m: length_3d(tx.dist(rx), dh),
            loss_db: PENETRATION_LOSS_DB * crossed as f64,
            depart_to: rx,
            arrive_from: tx,
            extra_phase: 0.0,
        });
    }

    let mut scored: Vec<(f64, Candidate)> = candidates.into_iter().map(|c| (c.amplitude(), c)).collect();
    // Stable sort keeps generation order for equal amplitudes.
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let strongest = scored[0].0;
    let floor = strongest * 10f64.powf(-config.dynamic_range_db / 20.0);
    let components = scored
        .into_iter()
        .filter(|(a, _)| *a >= floor)
        .take(config.max_paths)
        .map(|(amplitude, c)| {
            let delay_ns = c.length_m / SPEED_OF_LIGHT * 1e9;
            let phase = (TAU * c.length_m / WAVELENGTH_M + c.extra_phase).rem_euclid(TAU);
            let phase = if phase >= TAU { 0.0 } else { phase };
            let aod = bearing_deg(tx, c.depart_to);
            let aoa = wrap_deg(bearing_deg(rx, c.arrive_from) - pose.heading_deg);
            debug_assert!(c.kind != PathKind::Direct || c.depart_to == rx);
            Mpc { amplitude, phase, delay_ns, aod_deg: aod, aoa_deg: aoa }
        })
        .collect();
    MpcSet::new(snapshot_id, components)
}
