use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel_stats::MpcSet;
use crate::geo::{to_geodetic, LatLon};

use super::config::SceneConfig;
use super::render::render_panorama;
use super::rng::{stream_rng, Stream};
use super::trace::trace_mpcs;
use super::{Panorama, RxPose, Scene};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timestamps {
    pub channel_s: f64,
    pub image_s: f64,
    pub gps_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSnapshot {
    pub snapshot_id: String,
    pub area_id: u32,
    pub pose: RxPose,
    pub panorama: Panorama,
    pub tx_geo: LatLon,
    pub rx_geo: LatLon,
    pub mpcs: MpcSet,
    pub timestamps: Timestamps,
}

pub fn snapshot_id(area_id: u32, index: usize) -> String {
    format!("a{area_id}-{index:05}")
}

/// Bundles the rendered views, traced channel and jittered per-modality
/// timestamps for pose `index` of an area.
pub fn make_snapshot(scene: &Scene, pose: &RxPose, config: &SceneConfig, area_id: u32, index: usize) -> RawSnapshot {
    let id = snapshot_id(area_id, index);
    let mut rng = stream_rng(config.seed, Stream::Jitter, index as u64);
    let bound = config.jitter_s;
    let mut jitter = || if bound > 0.0 { rng.random_range(-bound..=bound) } else { 0.0 };
    let timestamps = Timestamps {
        channel_s: pose.timestamp_s + jitter(),
        image_s: pose.timestamp_s + jitter(),
        gps_s: pose.timestamp_s + jitter(),
    };
    RawSnapshot {
        area_id,
        pose: *pose,
        panorama: render_panorama(scene, pose, config.d_max_m),
        tx_geo: to_geodetic(scene.origin, scene.tx.x, scene.tx.y),
        rx_geo: to_geodetic(scene.origin, pose.position.x, pose.position.y),
        mpcs: trace_mpcs(scene, pose, config, &id),
        snapshot_id: id,
        timestamps,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{generate_scene, sample_trajectory};

    fn fixture(jitter_s: f64) -> (Scene, Vec<RxPose>, SceneConfig) {
        let cfg = SceneConfig { seed: 11, jitter_s, ..Default::default() };
        let scene = generate_scene(&cfg).unwrap();
        let poses = sample_trajectory(&scene, 30, &cfg).unwrap();
        (scene, poses, cfg)
    }

    #[test]
    fn zero_jitter_gives_equal_timestamps() {
        let (scene, poses, cfg) = fixture(0.0);
        let s = make_snapshot(&scene, &poses[3], &cfg, 1, 3);
        let t = s.timestamps;
        assert_eq!(t.channel_s, poses[3].timestamp_s);
        assert_eq!(t.image_s, t.channel_s);
        assert_eq!(t.gps_s, t.channel_s);
    }

    #[test]
    fn default_jitter_is_bounded() {
        let (scene, poses, cfg) = fixture(0.04);
        for (i, p) in poses.iter().enumerate() {
            let t = make_snapshot(&scene, p, &cfg, 1, i).timestamps;
            for v in [t.channel_s, t.image_s, t.gps_s] {
                assert!((v - p.timestamp_s).abs() <= 0.04);
            }
        }
    }

    #[test]
    fn snapshots_are_deterministic() {
        let (scene, poses, cfg) = fixture(0.04);
        let a = make_snapshot(&scene, &poses[7], &cfg, 2, 7);
        let b = make_snapshot(&scene, &poses[7], &cfg, 2, 7);
        assert_eq!(a, b);
        assert_eq!(a.snapshot_id, "a2-00007");
        assert_eq!(a.panorama.width, 360);
    }
}
