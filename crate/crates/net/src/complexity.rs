//! Parameter, FLOP and latency accounting.
//!
//! FLOPs are `2 × multiply-accumulates` summed over convolutions and
//! fully-connected layers, per sample. A convolution contributes
//! `k·k·C_in·C_out·H_out·W_out` MACs, a fully-connected layer `in·out`, and
//! the APS smoothing convolution `kernel` MACs per bin. Biases, activations,
//! normalisation and pooling are not counted.

use std::time::Instant;

use ndarray::Array4;
use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::layers::ConvGeometry;
use crate::mode::Mode;
use crate::model::{Batch, ChannelPredictor};
use crate::param::Module;
use crate::NetError;

pub const MIN_WARMUP: usize = 5;

/// `(total, trainable)` weights and biases. Frozen weights count toward the
/// total only; normalisation running statistics are not parameters.
pub fn count_params(config: &ModelConfig) -> Result<(usize, usize), NetError> {
    Ok(ChannelPredictor::new(config.clone(), 0)?.param_counts())
}

/// Per-sample FLOPs for `3 × h × w` image inputs.
pub fn estimate_flops(config: &ModelConfig, hw: (usize, usize)) -> Result<u64, NetError> {
    Ok(2 * ChannelPredictor::new(config.clone(), 0)?.macs(hw))
}

pub fn conv_flops(geom: &ConvGeometry, input_hw: (usize, usize)) -> u64 {
    2 * geom.macs(input_hw.0, input_hw.1)
}

pub fn linear_flops(in_dim: usize, out_dim: usize) -> u64 {
    2 * (in_dim * out_dim) as u64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub mean_ms: f64,
    pub samples_per_s: f64,
    pub batch_size: usize,
    pub repetitions: usize,
    pub warmup: usize,
    pub hardware: String,
}

/// CPU model name and logical core count, from `/proc/cpuinfo` when present.
pub fn hardware_descriptor() -> String {
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let model = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split_once(':'))
                .map(|(_, v)| v.trim().to_string())
        })
        .unwrap_or_else(|| std::env::consts::ARCH.to_string());
    format!("{model} ({cores} logical cores, {})", std::env::consts::OS)
}

/// Evaluation-mode forward latency. `warmup` is raised to at least
/// [`MIN_WARMUP`]; `repetitions` timed runs follow.
pub fn measure_latency(model: &mut ChannelPredictor, batch: &Batch, repetitions: usize, warmup: usize) -> Result<LatencyReport, NetError> {
    if repetitions == 0 {
        return Err(NetError::Config("latency needs at least one repetition".into()));
    }
    let warmup = warmup.max(MIN_WARMUP);
    for _ in 0..warmup {
        model.forward(batch, Mode::Eval)?;
    }
    let start = Instant::now();
    for _ in 0..repetitions {
        model.forward(batch, Mode::Eval)?;
    }
    let mean_ms = start.elapsed().as_secs_f64() * 1e3 / repetitions as f64;
    let batch_size = batch.len();
    Ok(LatencyReport {
        mean_ms,
        samples_per_s: batch_size as f64 / (mean_ms / 1e3),
        batch_size,
        repetitions,
        warmup,
        hardware: hardware_descriptor(),
    })
}

/// A random-valued batch covering every modality, for latency probes.
pub fn probe_batch(n: usize, hw: (usize, usize)) -> Batch {
    use vichan_core::geo::LatLon;
    let img = Array4::from_shape_fn((n, 3, hw.0, hw.1), |(b, c, y, x)| ((b + c * 5 + y * 3 + x) % 17) as f32 / 16.0);
    let tx = LatLon { lat: 31.0, lon: 121.0 };
    let locations = (0..n).map(|i| (tx, LatLon { lat: 31.0 + 1e-4 * i as f64, lon: 121.0 })).collect();
    Batch { semantic: Some(img.clone()), semantic_features: None, depth: Some(img), locations: Some(locations) }
}
