//! Scalar MSE and the composite angular-power-spectrum loss, each with its
//! gradient with respect to the predictions.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("length mismatch: {0} targets vs {1} predictions")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    Empty,
    #[error("invalid loss config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    /// Bins with target power strictly below this are up-weighted.
    pub tau_threshold: f64,
    pub omega_low: f64,
    pub omega_mse: f64,
    pub omega_l1: f64,
    pub omega_tp: f64,
    pub epsilon: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { tau_threshold: 0.5, omega_low: 8.0, omega_mse: 0.065, omega_l1: 0.025, omega_tp: 0.01, epsilon: 1e-8 }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), LossError> {
        let bad = |m: &str| Err(LossError::InvalidConfig(m.into()));
        if !(self.tau_threshold > 0.0 && self.tau_threshold < 1.0) {
            return bad("tau_threshold must lie in (0, 1)");
        }
        if !(self.omega_low >= 1.0) {
            return bad("omega_low must be at least 1");
        }
        if [self.omega_mse, self.omega_l1, self.omega_tp].iter().any(|w| !(*w >= 0.0)) {
            return bad("loss weights must be nonnegative");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        Ok(())
    }
}

fn check_pair(t: &[f64], p: &[f64]) -> Result<(), LossError> {
    if t.len() != p.len() {
        return Err(LossError::LengthMismatch(t.len(), p.len()));
    }
    if t.is_empty() {
        return Err(LossError::Empty);
    }
    Ok(())
}

pub fn mse_loss(targets: &[f64], predictions: &[f64]) -> Result<f64, LossError> {
    check_pair(targets, predictions)?;
    let n = targets.len() as f64;
    Ok(targets.iter().zip(predictions).map(|(t, p)| (t - p).powi(2)).sum::<f64>() / n)
}

/// `∂ mse / ∂ p_i = 2 (p_i − t_i) / n`.
pub fn mse_grad(targets: &[f64], predictions: &[f64]) -> Result<Vec<f64>, LossError> {
    check_pair(targets, predictions)?;
    let n = targets.len() as f64;
    Ok(targets.iter().zip(predictions).map(|(t, p)| 2.0 * (p - t) / n).collect())
}

/// `⟨p, q⟩ / (‖p‖‖q‖ + ε)`.
pub fn cos_sim(p: &[f64], q: &[f64], epsilon: f64) -> Result<f64, LossError> {
    if p.len() != q.len() {
        return Err(LossError::LengthMismatch(p.len(), q.len()));
    }
    let dot: f64 = p.iter().zip(q).map(|(a, b)| a * b).sum();
    let np = p.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nq = q.iter().map(|a| a * a).sum::<f64>().sqrt();
    Ok(dot / (np * nq + epsilon))
}

/// Row-major `M × bins` targets and predictions.
#[derive(Debug, Clone, Copy)]
pub struct ApsBatch<'a> {
    pub target: &'a [f64],
    pub prediction: &'a [f64],
    pub bins: usize,
}

impl<'a> ApsBatch<'a> {
    pub fn new(target: &'a [f64], prediction: &'a [f64], bins: usize) -> Result<Self, LossError> {
        check_pair(target, prediction)?;
        if bins == 0 || target.len() % bins != 0 {
            return Err(LossError::LengthMismatch(target.len(), bins));
        }
        Ok(Self { target, prediction, bins })
    }

    pub fn rows(&self) -> usize {
        self.target.len() / self.bins
    }

    fn row(&self, m: usize) -> (&'a [f64], &'a [f64]) {
        let r = m * self.bins..(m + 1) * self.bins;
        (&self.target[r.clone()], &self.prediction[r])
    }
}

/// `1 − mean_m cos(t_m, p_m)`.
pub fn shape_loss(batch: &ApsBatch, epsilon: f64) -> f64 {
    let m = batch.rows();
    let sum: f64 = (0..m)
        .map(|i| {
            let (t, p) = batch.row(i);
            cos_sim(t, p, epsilon).expect("rows share a length")
        })
        .sum();
    1.0 - sum / m as f64
}

/// `1 + (ω_low − 1)·[t_k < τ]`.
pub fn low_power_weights(target_row: &[f64], cfg: &LossConfig) -> Vec<f64> {
    target_row.iter().map(|&t| if t < cfg.tau_threshold { cfg.omega_low } else { 1.0 }).collect()
}

fn weighted_mean(batch: &ApsBatch, cfg: &LossConfig, f: impl Fn(f64) -> f64) -> f64 {
    let total: f64 = batch
        .target
        .iter()
        .zip(batch.prediction)
        .map(|(&t, &p)| {
            let w = if t < cfg.tau_threshold { cfg.omega_low } else { 1.0 };
            w * f(t - p)
        })
        .sum();
    total / batch.target.len() as f64
}

pub fn weighted_mse(batch: &ApsBatch, cfg: &LossConfig) -> f64 {
    weighted_mean(batch, cfg, |d| d * d)
}

pub fn weighted_l1(batch: &ApsBatch, cfg: &LossConfig) -> f64 {
    weighted_mean(batch, cfg, f64::abs)
}

/// Mean over rows of `|Σt − Σp| / (Σt + ε)`.
pub fn relative_total_power(batch: &ApsBatch, epsilon: f64) -> f64 {
    let m = batch.rows();
    let sum: f64 = (0..m)
        .map(|i| {
            let (t, p) = batch.row(i);
            let (st, sp): (f64, f64) = (t.iter().sum(), p.iter().sum());
            (st - sp).abs() / (st + epsilon)
        })
        .sum();
    sum / m as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub shape: f64,
    pub wmse: f64,
    pub wl1: f64,
    pub rtp: f64,
}

/// `shape + ω_mse·WMSE + ω_L1·WL1 + ω_tp·RTP`.
pub fn composite_aps_loss(batch: &ApsBatch, cfg: &LossConfig) -> LossBreakdown {
    let shape = shape_loss(batch, cfg.epsilon);
    let wmse = weighted_mse(batch, cfg);
    let wl1 = weighted_l1(batch, cfg);
    let rtp = relative_total_power(batch, cfg.epsilon);
    LossBreakdown {
        total: shape + cfg.omega_mse * wmse + cfg.omega_l1 * wl1 + cfg.omega_tp * rtp,
        shape,
        wmse,
        wl1,
        rtp,
    }
}

/// Loss and its gradient with respect to every prediction entry. The L1
/// and total-power terms use `sign(0) = 0` at their kinks.
pub fn composite_aps_grad(batch: &ApsBatch, cfg: &LossConfig) -> (LossBreakdown, Vec<f64>) {
    let loss = composite_aps_loss(batch, cfg);
    let (m, k) = (batch.rows(), batch.bins);
    let n = (m * k) as f64;
    let sign = |x: f64| if x > 0.0 { 1.0 } else if x < 0.0 { -1.0 } else { 0.0 };
    let mut grad = vec![0.0; m * k];
    for i in 0..m {
        let (t, p) = batch.row(i);
        let g = &mut grad[i * k..(i + 1) * k];
        let nt = t.iter().map(|a| a * a).sum::<f64>().sqrt();
        let np = p.iter().map(|a| a * a).sum::<f64>().sqrt();
        let dot: f64 = t.iter().zip(p).map(|(a, b)| a * b).sum();
        let denom = nt * np + cfg.epsilon;
        let (st, sp): (f64, f64) = (t.iter().sum(), p.iter().sum());
        let d_rtp = -sign(st - sp) / (m as f64 * (st + cfg.epsilon));
        for j in 0..k {
            // d cos / d p_j = t_j / D − dot·‖t‖·(p_j/‖p‖) / D².
            let dnp = if np > 0.0 { p[j] / np } else { 0.0 };
            let dcos = t[j] / denom - dot * nt * dnp / (denom * denom);
            let w = if t[j] < cfg.tau_threshold { cfg.omega_low } else { 1.0 };
            let diff = t[j] - p[j];
            g[j] = -dcos / m as f64
                + cfg.omega_mse * (-2.0 * w * diff / n)
                + cfg.omega_l1 * (-w * sign(diff) / n)
                + cfg.omega_tp * d_rtp;
        }
    }
    (loss, grad)
}
