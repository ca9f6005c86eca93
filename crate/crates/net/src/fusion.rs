//! Squeeze-excitation style gated fusion with one scalar gate per sample.

use ndarray::{concatenate, Array1, Array2, Axis};
use rand_chacha::ChaCha8Rng;

use crate::layers::{relu_backward, relu_inplace, sigmoid, Linear};
use crate::mode::Mode;
use crate::param::{join, Module, Param};

pub const SE_REDUCTION: usize = 16;

#[derive(Debug, Clone)]
pub struct SeFusion {
    pub width: usize,
    pub fc1: Linear,
    pub fc2: Linear,
    cache: Option<(Array2<f32>, Array2<f32>, Array1<f32>)>,
}

impl SeFusion {
    /// `width` is the concatenated width `256·n`; the hidden layer is `⌈width/16⌉`.
    pub fn new(width: usize, rng: &mut ChaCha8Rng) -> Self {
        let hidden = width.div_ceil(SE_REDUCTION);
        Self { width, fc1: Linear::new(width, hidden, rng), fc2: Linear::new(hidden, 1, rng), cache: None }
    }

    /// Returns the gated concatenation and the per-sample gate.
    pub fn forward(&mut self, features: &[Array2<f32>], mut mode: Mode<'_>) -> (Array2<f32>, Array1<f32>) {
        let views: Vec<_> = features.iter().map(|f| f.view()).collect();
        let x = concatenate(Axis(1), &views).expect("branch batches agree");
        assert_eq!(x.ncols(), self.width, "fusion width");
        let mut h = self.fc1.forward(&x, mode.reborrow());
        relu_inplace(&mut h);
        let z = self.fc2.forward(&h, mode.reborrow());
        let gate = z.column(0).mapv(sigmoid);
        let y = &x * &gate.view().insert_axis(Axis(1));
        if mode.is_train() {
            self.cache = Some((x, h, gate.clone()));
        }
        (y, gate)
    }

    /// Gradient with respect to the concatenation, split back per branch.
    pub fn backward(&mut self, dy: &Array2<f32>, branch_width: usize) -> Vec<Array2<f32>> {
        let (x, h, gate) = self.cache.take().expect("backward without forward");
        let mut dx = dy * &gate.view().insert_axis(Axis(1));
        let dgate = (dy * &x).sum_axis(Axis(1));
        let dz = Array2::from_shape_fn((gate.len(), 1), |(i, _)| dgate[i] * gate[i] * (1.0 - gate[i]));
        let dh = self.fc2.backward(&dz);
        let dh = relu_backward(&dh, &h);
        dx += &self.fc1.backward(&dh);
        (0..self.width / branch_width)
            .map(|b| dx.slice(ndarray::s![.., b * branch_width..(b + 1) * branch_width]).to_owned())
            .collect()
    }

    pub fn macs(&self) -> u64 {
        self.fc1.macs() + self.fc2.macs()
    }
}

impl Module for SeFusion {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.fc1.visit(&join(prefix, "fc1"), f);
        self.fc2.visit(&join(prefix, "fc2"), f);
    }
}
