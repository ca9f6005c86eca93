//! Channel statistics against textbook recomputations.

use std::f64::consts::TAU;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use vichan_core::channel_stats::{
    aps_360, aps_unnormalized, azimuth_spread_deg, labels_from_mpcs, path_loss_db, rms_delay_spread_ns, total_power, Mpc,
    MpcSet, Side,
};

use crate::Verdict;

const SETS: usize = 1000;
const MAX_PATHS: usize = 64;
const ORACLE_BUDGET_S: f64 = 10.0;

fn random_set(rng: &mut StdRng, id: usize) -> MpcSet {
    let n = rng.random_range(1..=MAX_PATHS);
    let comps = (0..n)
        .map(|_| {
            let amp = 10f64.powf(rng.random_range(-6.0..-1.0));
            Mpc::new(amp, rng.random_range(0.0..TAU), rng.random_range(0.0..2000.0), rng.random_range(0.0..360.0), rng.random_range(0.0..360.0))
                .unwrap()
        })
        .collect();
    MpcSet::new(format!("r{id}"), comps)
}

/// Pairwise delay moments, the mean resultant taken relative to the
/// strongest path, and a per-bin scan.
struct Brute {
    power: f64,
    pl: f64,
    ds: f64,
    asa: f64,
    asd: f64,
    aps_raw: Vec<f64>,
}

fn brute(set: &MpcSet) -> Brute {
    let c = &set.components;
    let p: Vec<f64> = c.iter().map(|m| m.amplitude * m.amplitude).collect();
    let power: f64 = p.iter().sum();
    let mut pair = 0.0;
    for i in 0..c.len() {
        for j in 0..c.len() {
            pair += p[i] * p[j] * (c[i].delay_ns - c[j].delay_ns).powi(2);
        }
    }
    let ds = (pair / (2.0 * power * power)).sqrt();
    let strongest = (0..c.len()).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap();
    // With θ measured from a reference, R̄² = ((P + A)² + B²)/P² where
    // A = Σ p (cos θ − 1) = −Σ p·2 sin²(θ/2) and B = Σ p sin θ.
    let spread = |az: fn(&Mpc) -> f64| {
        let (mut a, mut b) = (0.0, 0.0);
        for (m, w) in c.iter().zip(&p) {
            let theta = (az(m) - az(&c[strongest])).to_radians();
            a -= w * 2.0 * (theta / 2.0).sin().powi(2);
            b += w * theta.sin();
        }
        let one_minus_r2 = (-2.0 * a * power - a * a - b * b) / (power * power);
        (-(-one_minus_r2).ln_1p()).sqrt().to_degrees()
    };
    let aps_raw = (0..360)
        .map(|k| c.iter().zip(&p).filter(|(m, _)| m.aoa_deg >= k as f64 && m.aoa_deg < (k + 1) as f64).map(|(_, w)| w).sum())
        .collect();
    Brute { power, pl: -10.0 * power.log10(), ds, asa: spread(|m| m.aoa_deg), asd: spread(|m| m.aod_deg), aps_raw }
}

fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

pub fn oracle_equivalence() -> Verdict {
    let mut rng = StdRng::seed_from_u64(2024);
    let sets: Vec<MpcSet> = (0..SETS).map(|i| random_set(&mut rng, i)).collect();
    let start = std::time::Instant::now();
    let (mut worst, mut worst_sum, mut single) = (0.0f64, 0.0f64, 0usize);
    for set in &sets {
        let b = brute(set);
        let labels = labels_from_mpcs(set).unwrap();
        let ours = [
            path_loss_db(set).unwrap(),
            rms_delay_spread_ns(set).unwrap(),
            azimuth_spread_deg(set, Side::Arrival).unwrap(),
            azimuth_spread_deg(set, Side::Departure).unwrap(),
        ];
        single += usize::from(set.len() == 1);
        for (a, e) in ours.iter().zip([b.pl, b.ds, b.asa, b.asd]) {
            worst = worst.max(rel_err(*a, e));
        }
        for (a, e) in [labels.pl_db, labels.ds_ns, labels.asa_deg, labels.asd_deg].iter().zip(ours) {
            worst = worst.max(rel_err(*a, e));
        }
        worst_sum = worst_sum.max(rel_err(total_power(set).unwrap(), b.power));
        let raw = aps_unnormalized(set, Side::Arrival).unwrap();
        for (a, e) in raw.iter().zip(&b.aps_raw) {
            worst_sum = worst_sum.max(rel_err(*a, *e));
        }
        worst_sum = worst_sum.max(rel_err(raw.iter().sum(), b.power));
        let peak = b.aps_raw.iter().cloned().fold(0.0, f64::max);
        for (a, e) in aps_360(set, Side::Arrival).unwrap().iter().zip(&b.aps_raw) {
            worst = worst.max(rel_err(*a, e / peak));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Verdict::new(
        worst <= 1e-9 && worst_sum <= 1e-12 && secs < ORACLE_BUDGET_S,
        format!("{SETS} sets ({single} single-path): worst relative error {worst:.2e} on statistics, {worst_sum:.2e} on sums, {secs:.2}s"),
    )
}

fn set(paths: &[(f64, f64, f64)]) -> MpcSet {
    MpcSet::new("fixture", paths.iter().map(|&(amp, delay, az)| Mpc::new(amp, 0.0, delay, az, az).unwrap()).collect())
}

pub fn closed_forms() -> Verdict {
    let ds = rms_delay_spread_ns(&set(&[(1.0, 0.0, 0.0), (1.0, 100.0, 0.0)])).unwrap();
    let two = set(&[(1.0, 0.0, 0.0), (1.0, 0.0, 90.0)]);
    let expected = 2f64.ln().sqrt().to_degrees();
    let asa = azimuth_spread_deg(&two, Side::Arrival).unwrap();
    let asd = azimuth_spread_deg(&two, Side::Departure).unwrap();
    let one = labels_from_mpcs(&set(&[(0.3, 42.0, 123.4)])).unwrap();
    let ok = (ds - 50.0).abs() <= 1e-9
        && (asa - expected).abs() <= 1e-6
        && (asd - expected).abs() <= 1e-6
        && one.ds_ns == 0.0
        && one.asa_deg == 0.0
        && one.asd_deg == 0.0;
    Verdict::new(
        ok,
        format!(
            "two-path DS {ds} ns; 0°/90° spread {asa:.9}° (expected {expected:.9}°); single path DS/ASA/ASD {}/{}/{}",
            one.ds_ns, one.asa_deg, one.asd_deg
        ),
    )
}
