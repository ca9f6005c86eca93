use ndarray::{linalg::general_mat_mul, Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};
use rand_chacha::ChaCha8Rng;

use crate::init::uniform_fan_in;
use crate::mode::Mode;
use crate::param::{join, Module, Param};

/// Fully-connected layer, `y = x Wᵀ + b` on `[N, in]` batches.
#[derive(Debug, Clone)]
pub struct Linear {
    pub in_dim: usize,
    pub out_dim: usize,
    /// `[out, in]`
    pub weight: Param,
    pub bias: Param,
    input: Option<Array2<f32>>,
}

impl Linear {
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            in_dim,
            out_dim,
            weight: Param::weight(uniform_fan_in(&[out_dim, in_dim], in_dim, rng)),
            bias: Param::weight(uniform_fan_in(&[out_dim], in_dim, rng)),
            input: None,
        }
    }

    /// Weights plus biases.
    pub fn param_count(&self) -> usize {
        self.in_dim * self.out_dim + self.out_dim
    }

    pub fn macs(&self) -> u64 {
        (self.in_dim * self.out_dim) as u64
    }

    fn w(&self) -> ArrayView2<'_, f32> {
        ArrayView2::from_shape((self.out_dim, self.in_dim), self.weight.value_slice()).expect("weight shape")
    }

    pub fn forward(&mut self, x: &Array2<f32>, mode: Mode<'_>) -> Array2<f32> {
        assert_eq!(x.ncols(), self.in_dim, "linear input width");
        let mut y = Array2::<f32>::zeros((x.nrows(), self.out_dim));
        general_mat_mul(1.0, x, &self.w().t(), 0.0, &mut y);
        let b = ArrayView1::from(self.bias.value_slice());
        y += &b;
        if mode.is_train() {
            self.input = Some(x.to_owned());
        }
        y
    }

    pub fn backward(&mut self, dy: &Array2<f32>) -> Array2<f32> {
        let x = self.input.take().expect("linear backward without cached input");
        if self.weight.trainable {
            let mut dw = ArrayViewMut2::from_shape((self.out_dim, self.in_dim), self.weight.grad.as_slice_mut().expect("contiguous"))
                .expect("grad shape");
            general_mat_mul(1.0, &dy.t(), &x, 1.0, &mut dw);
            let db = dy.sum_axis(Axis(0));
            for (g, d) in self.bias.grad_slice_mut().iter_mut().zip(db.iter()) {
                *g += d;
            }
        }
        let mut dx = Array2::<f32>::zeros((dy.nrows(), self.in_dim));
        general_mat_mul(1.0, dy, &self.w(), 0.0, &mut dx);
        dx
    }
}

impl Module for Linear {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        f(&join(prefix, "weight"), &mut self.weight);
        f(&join(prefix, "bias"), &mut self.bias);
    }
}
