//! Nearest-timestamp alignment of the channel, image and GPS streams.

use serde::{Deserialize, Serialize};

/// Offsets strictly greater than this are not synchronized.
pub const MAX_SYNC_OFFSET_S: f64 = 0.1;

/// Indices into the three input streams that form one aligned record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triplet {
    pub channel: usize,
    pub image: usize,
    pub gps: usize,
}

fn nearest_unused(stream: &[f64], used: &[bool], t: f64) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &s) in stream.iter().enumerate() {
        if used[i] {
            continue;
        }
        let d = (s - t).abs();
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    best
}

/// Greedy matching anchored on the channel stream. Each channel record, in
/// order, takes the nearest unused image and GPS records; the triplet is
/// kept only when both offsets are within `max_offset_s`, and records of a
/// rejected triplet stay available.
pub fn synchronize(channel: &[f64], image: &[f64], gps: &[f64], max_offset_s: f64) -> Vec<Triplet> {
    let mut image_used = vec![false; image.len()];
    let mut gps_used = vec![false; gps.len()];
    let mut out = Vec::new();
    for (c, &t) in channel.iter().enumerate() {
        let (Some((i, di)), Some((g, dg))) = (nearest_unused(image, &image_used, t), nearest_unused(gps, &gps_used, t))
        else {
            continue;
        };
        if di <= max_offset_s && dg <= max_offset_s {
            image_used[i] = true;
            gps_used[g] = true;
            out.push(Triplet { channel: c, image: i, gps: g });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fixtures() {
        assert_eq!(synchronize(&[1.0], &[1.04], &[1.06], MAX_SYNC_OFFSET_S).len(), 1);
        assert!(synchronize(&[1.0], &[1.15], &[1.01], MAX_SYNC_OFFSET_S).is_empty());
        assert_eq!(synchronize(&[1.0], &[1.05], &[0.95], MAX_SYNC_OFFSET_S).len(), 1);
        assert!(synchronize(&[1.0], &[0.85], &[1.0], MAX_SYNC_OFFSET_S).is_empty());
        assert!(synchronize(&[], &[1.0], &[1.0], MAX_SYNC_OFFSET_S).is_empty());
    }

    #[test]
    fn records_are_used_once() {
        let m = synchronize(&[1.0, 1.02], &[1.01], &[1.0, 1.02], MAX_SYNC_OFFSET_S);
        assert_eq!(m, vec![Triplet { channel: 0, image: 0, gps: 0 }]);
    }

    /// Exhaustive matcher: maximise the number of triplets, then minimise the
    /// summed absolute offset, over every assignment of records.
    fn optimal(channel: &[f64], image: &[f64], gps: &[f64], max: f64) -> Vec<Triplet> {
        fn rec(
            c: usize,
            channel: &[f64],
            image: &[f64],
            gps: &[f64],
            max: f64,
            iu: &mut Vec<bool>,
            gu: &mut Vec<bool>,
            cur: &mut Vec<Triplet>,
            cost: f64,
            best: &mut (usize, f64, Vec<Triplet>),
        ) {
            // Even matching every remaining channel record cannot beat the best.
            if cur.len() + (channel.len() - c) < best.0 {
                return;
            }
            if c == channel.len() {
                if cur.len() > best.0 || (cur.len() == best.0 && cost < best.1) {
                    *best = (cur.len(), cost, cur.clone());
                }
                return;
            }
            rec(c + 1, channel, image, gps, max, iu, gu, cur, cost, best);
            for i in 0..image.len() {
                let di = (image[i] - channel[c]).abs();
                if iu[i] || di > max {
                    continue;
                }
                for g in 0..gps.len() {
                    let dg = (gps[g] - channel[c]).abs();
                    if gu[g] || dg > max {
                        continue;
                    }
                    iu[i] = true;
                    gu[g] = true;
                    cur.push(Triplet { channel: c, image: i, gps: g });
                    rec(c + 1, channel, image, gps, max, iu, gu, cur, cost + di + dg, best);
                    cur.pop();
                    iu[i] = false;
                    gu[g] = false;
                }
            }
        }
        let mut best = (0, f64::INFINITY, Vec::new());
        rec(
            0,
            channel,
            image,
            gps,
            max,
            &mut vec![false; image.len()],
            &mut vec![false; gps.len()],
            &mut Vec::new(),
            0.0,
            &mut best,
        );
        best.2
    }

    /// A 0.5 s cadence with per-record jitter and randomly missing records.
    fn stream(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec((-0.08f64..0.08, prop::bool::weighted(0.85)), n).prop_map(|v| {
            v.into_iter().enumerate().filter(|(_, (_, keep))| *keep).map(|(i, (j, _))| i as f64 * 0.5 + j).collect()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn greedy_matches_exhaustive(n in 1usize..=16, seedless in (stream(16), stream(16), stream(16))) {
            let (c, i, g) = seedless;
            let c: Vec<f64> = c.into_iter().take(n).collect();
            let got = synchronize(&c, &i, &g, MAX_SYNC_OFFSET_S);
            let want = optimal(&c, &i, &g, MAX_SYNC_OFFSET_S);
            prop_assert_eq!(got, want);
        }

        #[test]
        fn never_exceeds_offset(c in stream(40), i in stream(40), g in stream(40), max in 0.0f64..0.3) {
            for t in synchronize(&c, &i, &g, max) {
                prop_assert!((i[t.image] - c[t.channel]).abs() <= max);
                prop_assert!((g[t.gps] - c[t.channel]).abs() <= max);
            }
        }
    }
}
