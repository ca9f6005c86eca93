//! Three-branch multimodal channel predictor: semantic, depth and location
//! branches fused by a squeeze-excitation gate, with scalar and APS heads.
//!
//! Layers are hand-written on `ndarray` with explicit backward passes.

pub mod backbone;
pub mod blocks;
pub mod branches;
pub mod checkpoint;
pub mod complexity;
pub mod config;
pub mod fusion;
pub mod heads;
pub mod init;
pub mod layers;
pub mod mode;
pub mod model;
pub mod optim;
pub mod param;

pub use checkpoint::{BestRecord, Checkpoint};
pub use complexity::{count_params, estimate_flops, measure_latency, LatencyReport};
pub use config::{BackboneKind, Modality, ModelConfig, Target};
pub use mode::Mode;
pub use model::{Batch, ChannelPredictor, Prediction};
pub use optim::{clip_grad_norm, OptimConfig, Optimizer, OptimizerKind};
pub use param::{Module, Param, ParamKind};

/// Keeps freed heap memory mapped instead of returning it to the kernel.
///
/// Training allocates and frees multi-megabyte activations every step; with
/// glibc's defaults each one is a fresh `mmap`, and page faults then cost
/// more than the arithmetic. Called once by [`ChannelPredictor::new`].
pub fn tune_allocator() {
    static ONCE: std::sync::Once = std::sync::Once::new();
    ONCE.call_once(|| {
        #[cfg(all(target_os = "linux", target_env = "gnu"))]
        // SAFETY: mallopt only adjusts allocator thresholds.
        unsafe {
            libc::mallopt(libc::M_MMAP_THRESHOLD, 1 << 30);
            libc::mallopt(libc::M_TRIM_THRESHOLD, 1 << 30);
        }
    });
}

#[derive(Debug, thiserror::Error)]
pub enum NetError {
    #[error("unknown backbone {0:?}")]
    UnknownBackbone(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("batch lacks the active {0:?} modality")]
    MissingModality(Modality),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("io: {0}")]
    Io(String),
}
