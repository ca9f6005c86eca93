//! Per-modality encoders, each producing `feature_width` features.

use ndarray::{Array2, Array4};
use rand_chacha::ChaCha8Rng;
use vichan_core::dataset::LocationStats;
use vichan_core::geo::{haversine_m, LatLon};

use crate::backbone::{Backbone, BACKBONE_OUT};
use crate::blocks::{ConvBnRelu, Layer, Stage};
use crate::config::BackboneKind;
use crate::layers::{global_avg_pool, global_avg_pool_backward, relu_backward, relu_inplace, ConvGeometry, Dropout, Linear};
use crate::mode::Mode;
use crate::param::{join, Module, Param};

/// Backbone → FC 512→width → rectifier → dropout.
#[derive(Debug, Clone)]
pub struct SemanticBranch {
    pub backbone: Backbone,
    pub fc: Linear,
    pub dropout: Dropout,
    relu_out: Option<Array2<f32>>,
}

impl SemanticBranch {
    pub fn new(kind: BackboneKind, frozen: bool, width: usize, dropout: f32, rng: &mut ChaCha8Rng) -> Self {
        Self {
            backbone: Backbone::new(kind, frozen, rng),
            fc: Linear::new(BACKBONE_OUT, width, rng),
            dropout: Dropout::new(dropout),
            relu_out: None,
        }
    }

    /// Runs from early-stage features (raw images go through
    /// `backbone.early_forward` first).
    pub fn forward_features(&mut self, features: &Array4<f32>, mut mode: Mode<'_>) -> Array2<f32> {
        let g = self.backbone.late_forward(features, mode.reborrow());
        let mut h = self.fc.forward(&g, mode.reborrow());
        relu_inplace(&mut h);
        if mode.is_train() {
            self.relu_out = Some(h.clone());
        }
        self.dropout.forward(&h, mode)
    }

    pub fn forward(&mut self, images: &Array4<f32>, mut mode: Mode<'_>) -> Array2<f32> {
        let f = self.backbone.early_forward(images, mode.reborrow());
        self.forward_features(&f, mode)
    }

    pub fn backward(&mut self, dy: &Array2<f32>) {
        let d = self.dropout.backward(dy);
        let d = relu_backward(&d, &self.relu_out.take().expect("backward without forward"));
        let d = self.fc.backward(&d);
        self.backbone.backward(&d);
    }

    pub fn macs(&self, hw: (usize, usize)) -> u64 {
        self.backbone.macs(hw) + self.fc.macs()
    }
}

impl Module for SemanticBranch {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.backbone.visit(&join(prefix, "backbone"), f);
        self.fc.visit(&join(prefix, "fc"), f);
    }
}

pub const DEPTH_CHANNELS: [usize; 5] = [3, 16, 32, 64, 128];

/// Four stride-2 conv blocks → global average pooling → FC 128→width.
#[derive(Debug, Clone)]
pub struct DepthBranch {
    pub convs: Stage,
    pub fc: Linear,
    hw: Option<(usize, usize)>,
}

impl DepthBranch {
    pub fn new(width: usize, rng: &mut ChaCha8Rng) -> Self {
        let layers = DEPTH_CHANNELS
            .windows(2)
            .map(|c| Layer::ConvBnRelu(ConvBnRelu::new(ConvGeometry::new(c[0], c[1], 3, 2, 1), rng)))
            .collect();
        Self { convs: Stage { layers }, fc: Linear::new(DEPTH_CHANNELS[4], width, rng), hw: None }
    }

    pub fn forward(&mut self, x: &Array4<f32>, mut mode: Mode<'_>) -> Array2<f32> {
        let y = self.convs.forward(x, mode.reborrow());
        if mode.is_train() {
            self.hw = Some((y.dim().2, y.dim().3));
        }
        self.fc.forward(&global_avg_pool(&y), mode)
    }

    pub fn backward(&mut self, dy: &Array2<f32>) {
        let d = self.fc.backward(dy);
        let (h, w) = self.hw.take().expect("backward without forward");
        self.convs.backward(&global_avg_pool_backward(&d, h, w), false);
    }

    pub fn macs(&self, hw: (usize, usize)) -> u64 {
        self.convs.macs(hw).0 + self.fc.macs()
    }
}

impl Module for DepthBranch {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.convs.visit(&join(prefix, "convs"), f);
        self.fc.visit(&join(prefix, "fc"), f);
    }
}

pub const LOCATION_HIDDEN: usize = 64;

/// Standardised haversine Tx–Rx distance → FC 1→64 → rectifier → FC 64→width.
#[derive(Debug, Clone)]
pub struct LocationBranch {
    pub norm: LocationStats,
    pub fc1: Linear,
    pub fc2: Linear,
    relu_out: Option<Array2<f32>>,
}

impl LocationBranch {
    pub fn new(norm: LocationStats, width: usize, rng: &mut ChaCha8Rng) -> Self {
        Self { norm, fc1: Linear::new(1, LOCATION_HIDDEN, rng), fc2: Linear::new(LOCATION_HIDDEN, width, rng), relu_out: None }
    }

    pub fn encode(&self, pairs: &[(LatLon, LatLon)]) -> Array2<f32> {
        Array2::from_shape_fn((pairs.len(), 1), |(i, _)| self.norm.standardize(haversine_m(pairs[i].0, pairs[i].1)) as f32)
    }

    pub fn forward(&mut self, pairs: &[(LatLon, LatLon)], mut mode: Mode<'_>) -> Array2<f32> {
        let x = self.encode(pairs);
        let mut h = self.fc1.forward(&x, mode.reborrow());
        relu_inplace(&mut h);
        if mode.is_train() {
            self.relu_out = Some(h.clone());
        }
        self.fc2.forward(&h, mode)
    }

    pub fn backward(&mut self, dy: &Array2<f32>) {
        let d = self.fc2.backward(dy);
        let d = relu_backward(&d, &self.relu_out.take().expect("backward without forward"));
        self.fc1.backward(&d);
    }

    pub fn macs(&self) -> u64 {
        self.fc1.macs() + self.fc2.macs()
    }
}

impl Module for LocationBranch {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.fc1.visit(&join(prefix, "fc1"), f);
        self.fc2.visit(&join(prefix, "fc2"), f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn depth_branch_shapes_and_constant_pooling() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut d = DepthBranch::new(256, &mut rng);
        let x = Array4::<f32>::from_elem((2, 3, 224, 224), 0.5);
        assert_eq!(d.forward(&x, Mode::Eval).dim(), (2, 256));
        // Pooling a constant map returns that constant.
        let c = Array4::<f32>::from_elem((1, 4, 7, 7), 1.25);
        assert!(global_avg_pool(&c).iter().all(|&v| v == 1.25));
    }

    #[test]
    fn location_distance_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut l = LocationBranch::new(LocationStats { mean_m: 100.0, std_m: 50.0 }, 256, &mut rng);
        let (a, b) = (LatLon::new(0.0, 0.0), LatLon::new(1.0, 0.0));
        assert_eq!(l.encode(&[(a, a)])[[0, 0]], -2.0);
        let x = l.encode(&[(a, b)])[[0, 0]] as f64;
        let d = x * 50.0 + 100.0;
        assert!((d - 111_195.0).abs() < 1.0, "{d}");
        let ab = l.forward(&[(a, b)], Mode::Eval);
        let ba = l.forward(&[(b, a)], Mode::Eval);
        assert_eq!(ab, ba);
        assert_eq!(ab.dim(), (1, 256));
    }
}
