//! Output heads: a softplus scalar regressor and the 360-bin APS head.

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;

use crate::layers::{relu_backward, relu_inplace, sigmoid, softplus, softplus_grad, CircularConv1d, Dropout, LayerNorm, Linear};
use crate::mode::Mode;
use crate::param::{join, Module, Param};

/// FC width→256 → rectifier → FC 256→64 → rectifier → FC 64→1 → softplus.
#[derive(Debug, Clone)]
pub struct ScalarHead {
    pub fc1: Linear,
    pub fc2: Linear,
    pub fc3: Linear,
    cache: Option<(Array2<f32>, Array2<f32>, Array2<f32>)>,
}

impl ScalarHead {
    pub fn new(in_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        Self { fc1: Linear::new(in_dim, 256, rng), fc2: Linear::new(256, 64, rng), fc3: Linear::new(64, 1, rng), cache: None }
    }

    pub fn forward(&mut self, x: &Array2<f32>, mut mode: Mode<'_>) -> Array2<f32> {
        let mut h1 = self.fc1.forward(x, mode.reborrow());
        relu_inplace(&mut h1);
        let mut h2 = self.fc2.forward(&h1, mode.reborrow());
        relu_inplace(&mut h2);
        let z = self.fc3.forward(&h2, mode.reborrow());
        let y = z.mapv(softplus);
        if mode.is_train() {
            self.cache = Some((h1, h2, z));
        }
        y
    }

    pub fn backward(&mut self, dy: &Array2<f32>) -> Array2<f32> {
        let (h1, h2, z) = self.cache.take().expect("backward without forward");
        let dz = dy * &z.mapv(softplus_grad);
        let d = relu_backward(&self.fc3.backward(&dz), &h2);
        let d = relu_backward(&self.fc2.backward(&d), &h1);
        self.fc1.backward(&d)
    }

    pub fn macs(&self) -> u64 {
        self.fc1.macs() + self.fc2.macs() + self.fc3.macs()
    }
}

impl Module for ScalarHead {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.fc1.visit(&join(prefix, "fc1"), f);
        self.fc2.visit(&join(prefix, "fc2"), f);
        self.fc3.visit(&join(prefix, "fc3"), f);
    }
}

pub const APS_HIDDEN: usize = 512;
pub const APS_SMOOTH_KERNEL: usize = 5;
pub const APS_RAW_WEIGHT: f32 = 0.2;
pub const APS_SMOOTH_WEIGHT: f32 = 0.8;

/// Projection with layer norm, then `sigmoid(0.2·Z_raw + 0.8·circconv(Z_raw))`.
#[derive(Debug, Clone)]
pub struct ApsHead {
    pub proj: Linear,
    pub norm: LayerNorm,
    pub dropout: Dropout,
    pub out: Linear,
    pub smooth: CircularConv1d,
    cache: Option<(Array2<f32>, Array2<f32>)>,
}

impl ApsHead {
    pub fn new(in_dim: usize, bins: usize, dropout: f32, rng: &mut ChaCha8Rng) -> Self {
        Self {
            proj: Linear::new(in_dim, APS_HIDDEN, rng),
            norm: LayerNorm::new(APS_HIDDEN),
            dropout: Dropout::new(dropout),
            out: Linear::new(APS_HIDDEN, bins, rng),
            smooth: CircularConv1d::new(APS_SMOOTH_KERNEL, rng),
            cache: None,
        }
    }

    /// `Z_raw → 0.2·Z_raw + 0.8·Z_smooth`, before the sigmoid.
    pub fn residual_smooth(&mut self, z_raw: &Array2<f32>, mode: Mode<'_>) -> Array2<f32> {
        let z_smooth = self.smooth.forward(z_raw, mode);
        z_raw * APS_RAW_WEIGHT + &(z_smooth * APS_SMOOTH_WEIGHT)
    }

    pub fn forward(&mut self, x: &Array2<f32>, mut mode: Mode<'_>) -> Array2<f32> {
        let h = self.proj.forward(x, mode.reborrow());
        let mut h = self.norm.forward(&h, mode.reborrow());
        relu_inplace(&mut h);
        let hd = self.dropout.forward(&h, mode.reborrow());
        let z_raw = self.out.forward(&hd, mode.reborrow());
        let train = mode.is_train();
        let z = self.residual_smooth(&z_raw, mode);
        let y = z.mapv(sigmoid);
        if train {
            self.cache = Some((h, y.clone()));
        }
        y
    }

    pub fn backward(&mut self, dy: &Array2<f32>) -> Array2<f32> {
        let (h, y) = self.cache.take().expect("backward without forward");
        let dz = dy * &y.mapv(|s| s * (1.0 - s));
        let dz_raw = &dz * APS_RAW_WEIGHT + &self.smooth.backward(&(&dz * APS_SMOOTH_WEIGHT));
        let d = self.dropout.backward(&self.out.backward(&dz_raw));
        let d = relu_backward(&d, &h);
        let d = self.norm.backward(&d);
        self.proj.backward(&d)
    }

    /// Linear layers plus the smoothing convolution (`kernel` MACs per bin).
    pub fn macs(&self) -> u64 {
        self.proj.macs() + self.out.macs() + (self.smooth.kernel * self.out.out_dim) as u64
    }
}

impl Module for ApsHead {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.proj.visit(&join(prefix, "proj"), f);
        self.norm.visit(&join(prefix, "norm"), f);
        self.out.visit(&join(prefix, "out"), f);
        self.smooth.visit(&join(prefix, "smooth"), f);
    }
}
