use ndarray::Array2;
use rand::Rng;

use crate::mode::Mode;

/// Inverted dropout on `[N, D]` activations.
#[derive(Debug, Clone)]
pub struct Dropout {
    pub p: f32,
    mask: Option<Array2<f32>>,
}

impl Dropout {
    pub fn new(p: f32) -> Self {
        assert!((0.0..1.0).contains(&p), "dropout rate must be in [0, 1)");
        Self { p, mask: None }
    }

    pub fn forward(&mut self, x: &Array2<f32>, mode: Mode<'_>) -> Array2<f32> {
        match mode {
            Mode::Eval => x.to_owned(),
            Mode::Train(rng) => {
                let keep = 1.0 - self.p;
                let scale = 1.0 / keep;
                let p = self.p;
                let mask = Array2::from_shape_simple_fn(x.raw_dim(), || {
                    if p > 0.0 && rng.random::<f32>() < p { 0.0 } else { scale }
                });
                let y = x * &mask;
                self.mask = Some(mask);
                y
            }
        }
    }

    pub fn backward(&mut self, dy: &Array2<f32>) -> Array2<f32> {
        let mask = self.mask.take().expect("dropout backward without mask");
        dy * &mask
    }
}
