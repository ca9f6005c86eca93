//! Large-scale channel descriptors computed from extracted multipath
//! components: path loss, RMS delay spread, azimuth spreads, and the
//! 360-bin angular power spectrum.
//!
//! Power weights are always `|amplitude|²`; phase is carried through the
//! types but never enters a statistic.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const APS_BINS: usize = 360;

/// Radicand tolerance below which the delay-spread variance is clamped to 0.
pub const DS_RADICAND_TOL: f64 = 1e-12;

/// Floor applied to the mean resultant length before taking its logarithm.
pub const MEAN_RESULTANT_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("empty MPC set")]
    EmptySet,
    #[error("invalid multipath component: {0}")]
    InvalidComponent(String),
    #[error("delay-spread radicand {0} is negative beyond tolerance")]
    NegativeRadicand(f64),
    #[error("malformed MPC record: {0}")]
    Malformed(String),
}

/// One multipath component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mpc {
    /// Linear field magnitude, > 0.
    pub amplitude: f64,
    /// Radians in `[0, 2π)`.
    pub phase: f64,
    pub delay_ns: f64,
    /// Departure azimuth, degrees in `[0, 360)`.
    pub aod_deg: f64,
    /// Arrival azimuth, degrees in `[0, 360)`.
    pub aoa_deg: f64,
}

impl Mpc {
    pub fn new(amplitude: f64, phase: f64, delay_ns: f64, aod_deg: f64, aoa_deg: f64) -> Result<Self, StatsError> {
        let m = Self { amplitude, phase, delay_ns, aod_deg, aoa_deg };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), StatsError> {
        let azimuth_ok = |a: f64| (0.0..360.0).contains(&a);
        if !(self.amplitude > 0.0 && self.amplitude.is_finite()) {
            return Err(StatsError::InvalidComponent(format!("amplitude {} must be positive", self.amplitude)));
        }
        if !(self.delay_ns >= 0.0 && self.delay_ns.is_finite()) {
            return Err(StatsError::InvalidComponent(format!("delay {} ns must be non-negative", self.delay_ns)));
        }
        if !(0.0..std::f64::consts::TAU).contains(&self.phase) {
            return Err(StatsError::InvalidComponent(format!("phase {} outside [0, 2π)", self.phase)));
        }
        if !azimuth_ok(self.aod_deg) || !azimuth_ok(self.aoa_deg) {
            return Err(StatsError::InvalidComponent(format!(
                "azimuths ({}, {}) outside [0, 360)",
                self.aod_deg, self.aoa_deg
            )));
        }
        Ok(())
    }

    pub fn power(&self) -> f64 {
        self.amplitude * self.amplitude
    }

    pub fn azimuth(&self, side: Side) -> f64 {
        match side {
            Side::Departure => self.aod_deg,
            Side::Arrival => self.aoa_deg,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Departure,
    Arrival,
}

/// All components extracted for one snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcSet {
    pub snapshot_id: String,
    pub components: Vec<Mpc>,
}

impl MpcSet {
    pub fn new(snapshot_id: impl Into<String>, components: Vec<Mpc>) -> Self {
        Self { snapshot_id: snapshot_id.into(), components }
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    fn nonempty(&self) -> Result<&[Mpc], StatsError> {
        if self.components.is_empty() {
            Err(StatsError::EmptySet)
        } else {
            Ok(&self.components)
        }
    }
}

/// The five prediction targets of one snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelLabels {
    pub pl_db: f64,
    pub ds_ns: f64,
    pub asa_deg: f64,
    pub asd_deg: f64,
    /// Peak-normalised arrival APS, one entry per degree.
    pub aps: Vec<f64>,
}

impl ChannelLabels {
    pub fn check(&self) -> Result<(), StatsError> {
        if self.ds_ns < 0.0 || self.asa_deg < 0.0 || self.asd_deg < 0.0 {
            return Err(StatsError::InvalidComponent("negative spread".into()));
        }
        if self.aps.len() != APS_BINS {
            return Err(StatsError::InvalidComponent(format!("aps has {} bins", self.aps.len())));
        }
        let max = self.aps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if max != 1.0 || self.aps.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(StatsError::InvalidComponent("aps not peak-normalised to [0, 1]".into()));
        }
        Ok(())
    }
}

pub fn total_power(mpcs: &MpcSet) -> Result<f64, StatsError> {
    Ok(mpcs.nonempty()?.iter().map(Mpc::power).sum())
}

/// `−10·log10(Σ |γ|²)`.
pub fn path_loss_db(mpcs: &MpcSet) -> Result<f64, StatsError> {
    Ok(-10.0 * total_power(mpcs)?.log10())
}

/// Square root of the power-weighted second central moment of the delays.
///
/// `E[τ²] − E[τ]²` is evaluated on delays measured from their weighted
/// mean. The result is the same moment, but large common delays no longer
/// cancel away the significant digits of a small spread.
pub fn rms_delay_spread_ns(mpcs: &MpcSet) -> Result<f64, StatsError> {
    let comps = mpcs.nonempty()?;
    let total = total_power(mpcs)?;
    let origin: f64 = comps.iter().map(|c| c.power() * c.delay_ns).sum::<f64>() / total;
    let mut m1 = 0.0;
    let mut m2 = 0.0;
    for c in comps {
        let p = c.power() / total;
        let t = c.delay_ns - origin;
        m1 += p * t;
        m2 += p * t * t;
    }
    let radicand = m2 - m1 * m1;
    if radicand < -DS_RADICAND_TOL * m2.max(1.0) {
        return Err(StatsError::NegativeRadicand(radicand));
    }
    Ok(radicand.max(0.0).sqrt())
}

/// Circular azimuth spread `sqrt(−2 ln R̄)` in degrees.
///
/// `1 − R̄²` is evaluated through the pairwise identity
/// `Σ_ij p_i p_j · 2 sin²((φ_i − φ_j)/2) / P²`, which stays accurate when the
/// spread is tiny and `R̄` rounds to 1 in the direct form.
pub fn azimuth_spread_deg(mpcs: &MpcSet, side: Side) -> Result<f64, StatsError> {
    let comps = mpcs.nonempty()?;
    let total = total_power(mpcs)?;
    let mut pair_sum = 0.0;
    for (i, a) in comps.iter().enumerate() {
        let phi_a = a.azimuth(side).to_radians();
        for b in &comps[i + 1..] {
            let half = 0.5 * (phi_a - b.azimuth(side).to_radians());
            let s = half.sin();
            pair_sum += a.power() * b.power() * s * s;
        }
    }
    let one_minus_r2 = (4.0 * pair_sum / (total * total)).clamp(0.0, 1.0);
    let floor_r2 = MEAN_RESULTANT_FLOOR * MEAN_RESULTANT_FLOOR;
    let neg_ln_r2 = if 1.0 - one_minus_r2 < floor_r2 { -floor_r2.ln() } else { -(-one_minus_r2).ln_1p() };
    Ok(neg_ln_r2.sqrt().to_degrees())
}

/// Floor-binned power per degree before peak normalisation.
pub fn aps_unnormalized(mpcs: &MpcSet, side: Side) -> Result<Vec<f64>, StatsError> {
    let comps = mpcs.nonempty()?;
    let mut bins = vec![0.0; APS_BINS];
    for c in comps {
        let k = (c.azimuth(side).floor() as usize).min(APS_BINS - 1);
        bins[k] += c.power();
    }
    Ok(bins)
}

/// Angular power spectrum on 1° bins `[k, k+1)`, scaled so the peak is 1.
pub fn aps_360(mpcs: &MpcSet, side: Side) -> Result<Vec<f64>, StatsError> {
    let mut bins = aps_unnormalized(mpcs, side)?;
    let peak = bins.iter().cloned().fold(0.0, f64::max);
    for b in bins.iter_mut() {
        *b /= peak;
    }
    Ok(bins)
}

pub fn labels_from_mpcs(mpcs: &MpcSet) -> Result<ChannelLabels, StatsError> {
    Ok(ChannelLabels {
        pl_db: path_loss_db(mpcs)?,
        ds_ns: rms_delay_spread_ns(mpcs)?,
        asa_deg: azimuth_spread_deg(mpcs, Side::Arrival)?,
        asd_deg: azimuth_spread_deg(mpcs, Side::Departure)?,
        aps: aps_360(mpcs, Side::Arrival)?,
    })
}

#[derive(Serialize, Deserialize)]
struct MpcRecord {
    snapshot_id: String,
    /// `[amplitude, phase, delay_ns, aod_deg, aoa_deg]`
    mpcs: Vec<[f64; 5]>,
}

/// Writes one JSON object per line.
pub fn write_mpc_jsonl<W: Write>(mut out: W, sets: &[MpcSet]) -> std::io::Result<()> {
    for set in sets {
        let rec = MpcRecord {
            snapshot_id: set.snapshot_id.clone(),
            mpcs: set.components.iter().map(|c| [c.amplitude, c.phase, c.delay_ns, c.aod_deg, c.aoa_deg]).collect(),
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_mpc_jsonl<R: BufRead>(input: R) -> Result<Vec<MpcSet>, StatsError> {
    let mut sets = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line.map_err(|e| StatsError::Malformed(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: MpcRecord =
            serde_json::from_str(&line).map_err(|e| StatsError::Malformed(format!("line {}: {e}", lineno + 1)))?;
        let components = rec
            .mpcs
            .iter()
            .map(|r| Mpc::new(r[0], r[1], r[2], r[3], r[4]))
            .collect::<Result<Vec<_>, _>>()?;
        sets.push(MpcSet::new(rec.snapshot_id, components));
    }
    Ok(sets)
}
