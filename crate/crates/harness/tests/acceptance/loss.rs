//! Composite APS loss: fixed points, the hand-worked case and gradients.

use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use vichan_core::losses::{composite_aps_grad, composite_aps_loss, ApsBatch, LossConfig};

use crate::Verdict;

const BINS: usize = 360;
const POINTS: usize = 100;
const STEP: f64 = 1e-6;
const LOSS_BUDGET_S: f64 = 60.0;

fn one_hot(k: usize) -> Vec<f64> {
    let mut v = vec![0.0; BINS];
    v[k] = 1.0;
    v
}

/// Peak-normalised target rows with a few lobes, and predictions in (0, 1).
fn random_pair(rng: &mut StdRng, rows: usize) -> (Vec<f64>, Vec<f64>) {
    let mut t = Vec::with_capacity(rows * BINS);
    let mut p = Vec::with_capacity(rows * BINS);
    for _ in 0..rows {
        let lobes: Vec<(f64, f64, f64)> =
            (0..rng.random_range(1..4)).map(|_| (rng.random_range(0.0..360.0), rng.random_range(3.0..30.0), rng.random_range(0.2..1.0))).collect();
        let row: Vec<f64> = (0..BINS)
            .map(|k| {
                lobes
                    .iter()
                    .map(|&(c, w, a)| {
                        let d = (k as f64 - c).rem_euclid(360.0).min((c - k as f64).rem_euclid(360.0));
                        a * (-0.5 * (d / w).powi(2)).exp()
                    })
                    .sum::<f64>()
                    + 1e-3
            })
            .collect();
        let peak = row.iter().cloned().fold(0.0, f64::max);
        t.extend(row.iter().map(|v| v / peak));
        p.extend((0..BINS).map(|_| rng.random_range(0.01..0.99)));
    }
    (t, p)
}

pub fn composite_loss() -> Verdict {
    let cfg = LossConfig::default();
    let start = Instant::now();
    let mut rng = StdRng::seed_from_u64(3);

    let mut self_loss = 0.0f64;
    for rows in 1..=4 {
        let (t, _) = random_pair(&mut rng, rows);
        self_loss = self_loss.max(composite_aps_loss(&ApsBatch::new(&t, &t, BINS).unwrap(), &cfg).total);
    }
    let (t0, t180) = (one_hot(0), one_hot(180));
    self_loss = self_loss.max(composite_aps_loss(&ApsBatch::new(&t0, &t0, BINS).unwrap(), &cfg).total);
    let hand = composite_aps_loss(&ApsBatch::new(&t0, &t180, BINS).unwrap(), &cfg).total;

    let mut worst = 0.0f64;
    for point in 0..POINTS {
        let (t, mut p) = random_pair(&mut rng, 1 + point % 3);
        let (_, g) = composite_aps_grad(&ApsBatch::new(&t, &p, BINS).unwrap(), &cfg);
        let mut err2 = 0.0;
        let mut norm2 = 0.0;
        for j in 0..p.len() {
            let orig = p[j];
            p[j] = orig + STEP;
            let up = composite_aps_loss(&ApsBatch::new(&t, &p, BINS).unwrap(), &cfg).total;
            p[j] = orig - STEP;
            let down = composite_aps_loss(&ApsBatch::new(&t, &p, BINS).unwrap(), &cfg).total;
            p[j] = orig;
            let fd = (up - down) / (2.0 * STEP);
            err2 += (g[j] - fd).powi(2);
            norm2 += fd * fd;
        }
        worst = worst.max((err2 / norm2).sqrt());
    }
    let secs = start.elapsed().as_secs_f64();
    Verdict::new(
        self_loss <= 1e-6 && (hand - 1.00225).abs() <= 1e-6 && worst < 1e-4 && secs < LOSS_BUDGET_S,
        format!("max loss(p, p) {self_loss:.2e}; one-hot 0 vs 180 loss {hand:.8}; worst gradient relative error {worst:.2e} over {POINTS} points; {secs:.1}s"),
    )
}
