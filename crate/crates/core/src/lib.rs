//! Channel statistics, synthetic scene simulation, dataset handling, and
//! loss/metric functions for environment-aware V2I channel prediction.

pub mod channel_stats;
pub mod geo;
pub mod scene;
pub mod dataset;
pub mod losses;
pub mod metrics;
