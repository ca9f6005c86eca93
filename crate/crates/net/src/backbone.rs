//! Semantic-branch backbones: an early stage that can be frozen and a
//! trainable late stage ending in global average pooling to 512 features.

use ndarray::{Array2, Array4};
use rand_chacha::ChaCha8Rng;

use crate::blocks::{BasicBlock, ConvBnRelu, Layer, Stage};
use crate::config::BackboneKind;
use crate::layers::{global_avg_pool, global_avg_pool_backward, ConvGeometry, MaxPool2d};
use crate::mode::Mode;
use crate::param::{join, Module, Param};

pub const BACKBONE_OUT: usize = 512;

fn residual_stage(in_ch: usize, out_ch: usize, blocks: usize, stride: usize, rng: &mut ChaCha8Rng) -> Vec<Layer> {
    (0..blocks)
        .map(|i| {
            let (cin, s) = if i == 0 { (in_ch, stride) } else { (out_ch, 1) };
            Layer::Block(BasicBlock::new(cin, out_ch, s, rng))
        })
        .collect()
}

fn cbr(in_ch: usize, out_ch: usize, kernel: usize, stride: usize, rng: &mut ChaCha8Rng) -> Layer {
    Layer::ConvBnRelu(ConvBnRelu::new(ConvGeometry::new(in_ch, out_ch, kernel, stride, kernel / 2), rng))
}

#[derive(Debug, Clone)]
pub struct Backbone {
    pub kind: BackboneKind,
    pub frozen: bool,
    /// Stem and first residual stages (first three convs for the compact net).
    pub early: Stage,
    pub late: Stage,
    late_hw: Option<(usize, usize)>,
}

impl Backbone {
    pub fn new(kind: BackboneKind, frozen: bool, rng: &mut ChaCha8Rng) -> Self {
        let (early, late) = match kind {
            BackboneKind::Residual34 => {
                // Stem, then 3/4/6/3 basic blocks at 64/128/256/512 channels.
                let mut early = vec![cbr(3, 64, 7, 2, rng), Layer::MaxPool(MaxPool2d::new(3, 2, 1))];
                early.extend(residual_stage(64, 64, 3, 1, rng));
                early.extend(residual_stage(64, 128, 4, 2, rng));
                let mut late = residual_stage(128, 256, 6, 2, rng);
                late.extend(residual_stage(256, 512, 3, 2, rng));
                (early, late)
            }
            BackboneKind::CompactConv => (
                vec![cbr(3, 16, 3, 2, rng), cbr(16, 32, 3, 2, rng), cbr(32, 64, 3, 2, rng)],
                vec![cbr(64, 128, 3, 2, rng), cbr(128, 256, 3, 2, rng), cbr(256, BACKBONE_OUT, 1, 1, rng)],
            ),
        };
        let mut b = Self { kind, frozen, early: Stage { layers: early }, late: Stage { layers: late }, late_hw: None };
        if frozen {
            b.early.set_trainable(false);
        }
        b
    }

    /// Early-stage features. Frozen stages always run with running
    /// statistics, so their output can be cached across epochs.
    pub fn early_forward(&mut self, x: &Array4<f32>, mode: Mode<'_>) -> Array4<f32> {
        if self.frozen {
            self.early.forward(x, Mode::Eval)
        } else {
            self.early.forward(x, mode)
        }
    }

    pub fn late_forward(&mut self, features: &Array4<f32>, mode: Mode<'_>) -> Array2<f32> {
        let train = mode.is_train();
        let y = self.late.forward(features, mode);
        if train {
            self.late_hw = Some((y.dim().2, y.dim().3));
        }
        global_avg_pool(&y)
    }

    pub fn backward(&mut self, dy: &Array2<f32>) {
        let (h, w) = self.late_hw.take().expect("backward without forward");
        let d = global_avg_pool_backward(dy, h, w);
        let d = self.late.backward(&d, !self.frozen);
        if !self.frozen {
            self.early.backward(&d.expect("early stage needs a gradient"), false);
        }
    }

    /// Multiply-accumulates per sample for a `3 × h × w` input.
    pub fn macs(&self, hw: (usize, usize)) -> u64 {
        let (early, hw) = self.early.macs(hw);
        early + self.late.macs(hw).0
    }
}

impl Module for Backbone {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.early.visit(&join(prefix, "early"), f);
        self.late.visit(&join(prefix, "late"), f);
    }
}
