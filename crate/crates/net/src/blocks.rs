//! Composite convolutional layers and sequential stages.

use ndarray::Array4;
use rand_chacha::ChaCha8Rng;

use crate::layers::{relu_backward, relu_inplace, BatchNorm2d, Conv2d, ConvGeometry, MaxPool2d};
use crate::mode::Mode;
use crate::param::{join, Module, Param};

/// Conv (no bias) → batch norm → rectifier.
#[derive(Debug, Clone)]
pub struct ConvBnRelu {
    pub conv: Conv2d,
    pub bn: BatchNorm2d,
}

impl ConvBnRelu {
    pub fn new(geom: ConvGeometry, rng: &mut ChaCha8Rng) -> Self {
        Self { conv: Conv2d::new(geom, false, rng), bn: BatchNorm2d::new(geom.out_ch) }
    }

    pub fn forward(&mut self, x: &Array4<f32>, mut mode: Mode<'_>) -> Array4<f32> {
        let y = self.conv.forward(x, mode.reborrow());
        let mut y = self.bn.forward(&y, mode);
        relu_inplace(&mut y);
        y
    }

    pub fn backward(&mut self, dy: &Array4<f32>, need_input_grad: bool) -> Option<Array4<f32>> {
        let d = self.bn.backward_through_relu(dy);
        self.conv.backward(&d, need_input_grad)
    }
}

impl Module for ConvBnRelu {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.conv.visit(&join(prefix, "conv"), f);
        self.bn.visit(&join(prefix, "bn"), f);
    }
}

/// Two 3×3 convolutions with an identity or 1×1 projection shortcut.
#[derive(Debug, Clone)]
pub struct BasicBlock {
    pub conv1: Conv2d,
    pub bn1: BatchNorm2d,
    pub conv2: Conv2d,
    pub bn2: BatchNorm2d,
    pub downsample: Option<(Conv2d, BatchNorm2d)>,
    cache: Option<(Array4<f32>, Array4<f32>)>,
}

impl BasicBlock {
    pub fn new(in_ch: usize, out_ch: usize, stride: usize, rng: &mut ChaCha8Rng) -> Self {
        let downsample = (stride != 1 || in_ch != out_ch).then(|| {
            (Conv2d::new(ConvGeometry::new(in_ch, out_ch, 1, stride, 0), false, rng), BatchNorm2d::new(out_ch))
        });
        Self {
            conv1: Conv2d::new(ConvGeometry::new(in_ch, out_ch, 3, stride, 1), false, rng),
            bn1: BatchNorm2d::new(out_ch),
            conv2: Conv2d::new(ConvGeometry::new(out_ch, out_ch, 3, 1, 1), false, rng),
            bn2: BatchNorm2d::new(out_ch),
            downsample,
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Array4<f32>, mut mode: Mode<'_>) -> Array4<f32> {
        let h = self.conv1.forward(x, mode.reborrow());
        let mut h = self.bn1.forward(&h, mode.reborrow());
        relu_inplace(&mut h);
        let y = self.conv2.forward(&h, mode.reborrow());
        let mut y = self.bn2.forward(&y, mode.reborrow());
        match self.downsample.as_mut() {
            Some((conv, bn)) => {
                let s = conv.forward(x, mode.reborrow());
                y += &bn.forward(&s, mode.reborrow());
            }
            None => y += x,
        }
        relu_inplace(&mut y);
        if mode.is_train() {
            self.cache = Some((h, y.clone()));
        }
        y
    }

    pub fn backward(&mut self, dy: &Array4<f32>, need_input_grad: bool) -> Option<Array4<f32>> {
        let (h, out) = self.cache.take().expect("backward without forward");
        let d = relu_backward(dy, &out);
        let dmain = self.bn2.backward(&d);
        let dh = self.conv2.backward(&dmain, true).expect("input grad requested");
        let dh = relu_backward(&dh, &h);
        let dh = self.bn1.backward(&dh);
        let dx_main = self.conv1.backward(&dh, need_input_grad);
        let dx_short = match self.downsample.as_mut() {
            Some((conv, bn)) => {
                let ds = bn.backward(&d);
                conv.backward(&ds, need_input_grad)
            }
            None => need_input_grad.then(|| d.clone()),
        };
        match (dx_main, dx_short) {
            (Some(a), Some(b)) => Some(a + b),
            _ => None,
        }
    }
}

impl Module for BasicBlock {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.conv1.visit(&join(prefix, "conv1"), f);
        self.bn1.visit(&join(prefix, "bn1"), f);
        self.conv2.visit(&join(prefix, "conv2"), f);
        self.bn2.visit(&join(prefix, "bn2"), f);
        if let Some((conv, bn)) = self.downsample.as_mut() {
            conv.visit(&join(prefix, "downsample.0"), f);
            bn.visit(&join(prefix, "downsample.1"), f);
        }
    }
}

#[derive(Debug, Clone)]
pub enum Layer {
    ConvBnRelu(ConvBnRelu),
    MaxPool(MaxPool2d),
    Block(BasicBlock),
}

impl Layer {
    pub fn forward(&mut self, x: &Array4<f32>, mode: Mode<'_>) -> Array4<f32> {
        match self {
            Layer::ConvBnRelu(l) => l.forward(x, mode),
            Layer::MaxPool(l) => l.forward(x, mode),
            Layer::Block(l) => l.forward(x, mode),
        }
    }

    pub fn backward(&mut self, dy: &Array4<f32>, need_input_grad: bool) -> Option<Array4<f32>> {
        match self {
            Layer::ConvBnRelu(l) => l.backward(dy, need_input_grad),
            Layer::MaxPool(l) => Some(l.backward(dy)),
            Layer::Block(l) => l.backward(dy, need_input_grad),
        }
    }

    /// Multiply-accumulates for one sample and the output spatial size.
    pub fn macs(&self, (h, w): (usize, usize)) -> (u64, (usize, usize)) {
        match self {
            Layer::ConvBnRelu(l) => (l.conv.geom.macs(h, w), l.conv.geom.output_hw(h, w)),
            Layer::MaxPool(l) => (0, l.output_hw(h, w)),
            Layer::Block(b) => {
                let hw1 = b.conv1.geom.output_hw(h, w);
                let mut macs = b.conv1.geom.macs(h, w) + b.conv2.geom.macs(hw1.0, hw1.1);
                if let Some((conv, _)) = &b.downsample {
                    macs += conv.geom.macs(h, w);
                }
                (macs, hw1)
            }
        }
    }

    pub fn out_channels(&self) -> Option<usize> {
        match self {
            Layer::ConvBnRelu(l) => Some(l.conv.geom.out_ch),
            Layer::MaxPool(_) => None,
            Layer::Block(b) => Some(b.conv2.geom.out_ch),
        }
    }
}

impl Module for Layer {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        match self {
            Layer::ConvBnRelu(l) => l.visit(prefix, f),
            Layer::MaxPool(_) => {}
            Layer::Block(l) => l.visit(prefix, f),
        }
    }
}

/// Layers applied in order.
#[derive(Debug, Clone, Default)]
pub struct Stage {
    pub layers: Vec<Layer>,
}

impl Stage {
    pub fn forward(&mut self, x: &Array4<f32>, mut mode: Mode<'_>) -> Array4<f32> {
        let mut h = x.clone();
        for l in &mut self.layers {
            h = l.forward(&h, mode.reborrow());
        }
        h
    }

    pub fn backward(&mut self, dy: &Array4<f32>, need_input_grad: bool) -> Option<Array4<f32>> {
        let mut d = dy.clone();
        let n = self.layers.len();
        for (i, l) in self.layers.iter_mut().enumerate().rev() {
            let need = i > 0 || need_input_grad;
            match l.backward(&d, need) {
                Some(g) => d = g,
                None => {
                    debug_assert!(i == 0 && !need_input_grad, "missing gradient at layer {i} of {n}");
                    return None;
                }
            }
        }
        Some(d)
    }

    pub fn macs(&self, mut hw: (usize, usize)) -> (u64, (usize, usize)) {
        let mut total = 0;
        for l in &self.layers {
            let (m, next) = l.macs(hw);
            total += m;
            hw = next;
        }
        (total, hw)
    }

    pub fn out_channels(&self) -> Option<usize> {
        self.layers.iter().rev().find_map(Layer::out_channels)
    }
}

impl Module for Stage {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.visit(&join(prefix, &i.to_string()), f);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn loss_and_grad(block: &mut BasicBlock, x: &Array4<f32>, w: &Array4<f32>) -> (f64, Array4<f32>) {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let y = block.forward(x, Mode::Train(&mut rng));
        let loss = (&y * w).iter().map(|&v| v as f64).sum();
        let dx = block.backward(w, true).unwrap();
        (loss, dx)
    }

    #[test]
    fn basic_block_input_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (in_ch, out_ch, stride) in [(4, 4, 1), (3, 6, 2)] {
            let mut block = BasicBlock::new(in_ch, out_ch, stride, &mut rng);
            let x = Array4::from_shape_fn((2, in_ch, 6, 6), |(a, b, c, d)| ((a * 7 + b * 5 + c * 3 + d) as f32 * 0.37).sin());
            let (ho, wo) = block.conv1.geom.output_hw(6, 6);
            let w = Array4::from_shape_fn((2, out_ch, ho, wo), |(a, b, c, d)| ((a + 2 * b + 3 * c + 5 * d) as f32 * 0.11).cos());
            let (_, dx) = loss_and_grad(&mut block, &x, &w);
            // Small step: larger ones straddle rectifier kinks.
            let h = 1e-3f32;
            for idx in [(0, 0, 0, 0), (1, in_ch - 1, 3, 2), (0, 1, 5, 5)] {
                let mut xp = x.clone();
                xp[idx] += h;
                let mut xm = x.clone();
                xm[idx] -= h;
                let (lp, _) = loss_and_grad(&mut block.clone(), &xp, &w);
                let (lm, _) = loss_and_grad(&mut block.clone(), &xm, &w);
                let fd = (lp - lm) / (2.0 * h as f64);
                assert!((fd - dx[idx] as f64).abs() < 2e-2 * fd.abs().max(1.0), "{idx:?}: fd {fd} vs {}", dx[idx]);
            }
        }
    }

    #[test]
    fn stage_macs_follow_geometry() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let stage = Stage {
            layers: vec![
                Layer::ConvBnRelu(ConvBnRelu::new(ConvGeometry::new(3, 16, 3, 2, 1), &mut rng)),
                Layer::MaxPool(MaxPool2d::new(3, 2, 1)),
            ],
        };
        let (macs, hw) = stage.macs((224, 224));
        assert_eq!(2 * macs, 10_838_016);
        assert_eq!(hw, (56, 56));
    }
}
