//! Epoch-level early stopping and learning-rate schedules.
//!
//! Epochs are numbered from 1. An epoch "improves" when its validation loss
//! is strictly below the best seen so far; the first epoch always improves.

use crate::config::SchedulerConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: Option<f64>,
    pub best_epoch: usize,
    pub bad_epochs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StopDecision {
    pub improved: bool,
    pub stop: bool,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self { patience, best: None, best_epoch: 0, bad_epochs: 0 }
    }

    /// Stops once `patience` consecutive epochs fail to improve.
    pub fn update(&mut self, epoch: usize, val: f64) -> StopDecision {
        let improved = self.best.is_none_or(|b| val < b);
        if improved {
            self.best = Some(val);
            self.best_epoch = epoch;
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
        }
        StopDecision { improved, stop: self.bad_epochs >= self.patience }
    }
}

/// Produces the learning-rate multiplier for each epoch.
#[derive(Debug, Clone, PartialEq)]
pub enum LrSchedule {
    Plateau { factor: f64, patience: usize, best: Option<f64>, bad_epochs: usize, scale: f64 },
    Cosine { t0: usize, t_mult: usize },
}

impl LrSchedule {
    pub fn new(cfg: SchedulerConfig) -> Self {
        match cfg {
            SchedulerConfig::Plateau { factor, patience } => {
                LrSchedule::Plateau { factor, patience, best: None, bad_epochs: 0, scale: 1.0 }
            }
            SchedulerConfig::CosineWarmRestarts { t0, t_mult } => LrSchedule::Cosine { t0, t_mult },
        }
    }

    /// Multiplier to use while training `epoch`.
    pub fn scale(&self, epoch: usize) -> f64 {
        match self {
            LrSchedule::Plateau { scale, .. } => *scale,
            LrSchedule::Cosine { t0, t_mult } => {
                let (t_cur, t_i) = cosine_position(epoch - 1, *t0, *t_mult);
                0.5 * (1.0 + (std::f64::consts::PI * t_cur as f64 / t_i as f64).cos())
            }
        }
    }

    /// Feeds the validation loss of `epoch`; returns true when the plateau
    /// rule cut the rate. The cosine schedule ignores validation.
    pub fn observe(&mut self, val: f64) -> bool {
        let LrSchedule::Plateau { factor, patience, best, bad_epochs, scale } = self else { return false };
        if best.is_none_or(|b| val < b) {
            *best = Some(val);
            *bad_epochs = 0;
            return false;
        }
        *bad_epochs += 1;
        if *bad_epochs >= *patience {
            *scale *= *factor;
            *bad_epochs = 0;
            return true;
        }
        false
    }
}

/// `(epochs since last restart, current period)` for a zero-based epoch.
pub fn cosine_position(mut e: usize, t0: usize, t_mult: usize) -> (usize, usize) {
    let mut t_i = t0;
    while e >= t_i {
        e -= t_i;
        t_i *= t_mult;
    }
    (e, t_i)
}
