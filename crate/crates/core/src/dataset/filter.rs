//! Validity filtering of synchronized snapshots.

use serde::{Deserialize, Serialize};

use crate::channel_stats::total_power;
use crate::geo::haversine_m;
use crate::scene::RawSnapshot;

/// Thresholds for each drop rule; `None` disables a rule.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterRules {
    /// Minimum linear total power of the channel snapshot.
    pub min_total_power: Option<f64>,
    /// Maximum plausible receiver speed between consecutive GPS fixes.
    pub max_speed_ms: Option<f64>,
    /// Distance tolerance on the jump rule for fix noise and timestamp jitter.
    pub jump_slack_m: f64,
    /// Speed below which the vehicle counts as stopped.
    pub stop_speed_ms: Option<f64>,
    /// Stops longer than this are dropped.
    pub max_stop_s: f64,
    /// Image-occlusion hook; no occlusion criterion is defined by default.
    #[serde(skip)]
    pub occluded: Option<fn(&RawSnapshot) -> bool>,
}

impl Default for FilterRules {
    fn default() -> Self {
        Self {
            min_total_power: Some(1e-20),
            max_speed_ms: Some(20.0 / 3.6),
            jump_slack_m: 1.0,
            stop_speed_ms: Some(0.1), max_stop_s: 10.0, occluded: None }
    }
}

/// Hooks compare by presence only; function addresses are not meaningful.
impl PartialEq for FilterRules {
    fn eq(&self, o: &Self) -> bool {
        self.min_total_power == o.min_total_power
            && self.max_speed_ms == o.max_speed_ms
            && self.jump_slack_m == o.jump_slack_m
            && self.stop_speed_ms == o.stop_speed_ms
            && self.max_stop_s == o.max_stop_s
            && self.occluded.is_some() == o.occluded.is_some()
    }
}

impl FilterRules {
    /// The empty rule set: every snapshot is kept.
    pub fn none() -> Self {
        Self { min_total_power: None, max_speed_ms: None, jump_slack_m: 0.0, stop_speed_ms: None, max_stop_s: f64::INFINITY, occluded: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropRule {
    LowPower,
    GpsJump,
    ProlongedStop,
    Occlusion,
    Unsynchronized,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropEntry {
    pub snapshot_id: String,
    pub rule: DropRule,
}

/// Applies the rules to one time-ordered trajectory. Jumps are measured
/// against the last kept fix; stops are runs of consecutive fixes slower
/// than `stop_speed_ms` whose duration exceeds `max_stop_s`.
pub fn filter_invalid(snapshots: Vec<RawSnapshot>, rules: &FilterRules) -> (Vec<RawSnapshot>, Vec<DropEntry>) {
    let mut drops = Vec::new();
    let mut stage = Vec::with_capacity(snapshots.len());
    let mut last_kept: Option<usize> = None;
    for s in snapshots {
        let rule = if rules.min_total_power.is_some_and(|floor| total_power(&s.mpcs).map_or(true, |p| p < floor)) {
            Some(DropRule::LowPower)
        } else if rules.occluded.is_some_and(|f| f(&s)) {
            Some(DropRule::Occlusion)
        } else if let (Some(vmax), Some(prev)) = (rules.max_speed_ms, last_kept.map(|i| &stage[i])) {
            let prev: &RawSnapshot = prev;
            let dt = (s.timestamps.gps_s - prev.timestamps.gps_s).abs();
            (haversine_m(prev.rx_geo, s.rx_geo) > vmax * dt + rules.jump_slack_m).then_some(DropRule::GpsJump)
        } else {
            None
        };
        match rule {
            Some(rule) => drops.push(DropEntry { snapshot_id: s.snapshot_id.clone(), rule }),
            None => {
                stage.push(s);
                last_kept = Some(stage.len() - 1);
            }
        }
    }

    let Some(stop_speed) = rules.stop_speed_ms else { return (stage, drops) };
    let mut stopped = vec![false; stage.len()];
    for i in 1..stage.len() {
        let dt = stage[i].timestamps.gps_s - stage[i - 1].timestamps.gps_s;
        let d = haversine_m(stage[i - 1].rx_geo, stage[i].rx_geo);
        stopped[i] = dt > 0.0 && d / dt < stop_speed;
    }
    let mut drop = vec![false; stage.len()];
    let mut i = 1;
    while i < stage.len() {
        if !stopped[i] {
            i += 1;
            continue;
        }
        let start = i - 1;
        let mut end = i;
        while end + 1 < stage.len() && stopped[end + 1] {
            end += 1;
        }
        if stage[end].timestamps.gps_s - stage[start].timestamps.gps_s > rules.max_stop_s {
            drop[start..=end].iter_mut().for_each(|d| *d = true);
        }
        i = end + 1;
    }
    let mut kept = Vec::with_capacity(stage.len());
    for (s, d) in stage.into_iter().zip(drop) {
        if d {
            drops.push(DropEntry { snapshot_id: s.snapshot_id.clone(), rule: DropRule::ProlongedStop });
        } else {
            kept.push(s);
        }
    }
    (kept, drops)
}
