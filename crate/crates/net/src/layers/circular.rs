use ndarray::Array2;
use rand_chacha::ChaCha8Rng;

use crate::init::uniform_fan_in;
use crate::mode::Mode;
use crate::param::{join, Module, Param};

/// Single-channel 1-D convolution with wrap-around padding.
///
/// `y[i] = b + Σ_j w[j] · x[(i + j − pad) mod L]`, with `pad = kernel / 2`,
/// so bin 0 and bin `L − 1` are neighbours.
#[derive(Debug, Clone)]
pub struct CircularConv1d {
    pub kernel: usize,
    pub weight: Param,
    pub bias: Param,
    input: Option<Array2<f32>>,
}

impl CircularConv1d {
    pub fn new(kernel: usize, rng: &mut ChaCha8Rng) -> Self {
        assert!(kernel % 2 == 1, "kernel must be odd");
        Self {
            kernel,
            weight: Param::weight(uniform_fan_in(&[kernel], kernel, rng)),
            bias: Param::weight(uniform_fan_in(&[1], kernel, rng)),
            input: None,
        }
    }

    pub fn padding(&self) -> usize {
        self.kernel / 2
    }

    pub fn forward(&mut self, x: &Array2<f32>, mode: Mode<'_>) -> Array2<f32> {
        let (n, len) = x.dim();
        let w = self.weight.value_slice();
        let b = self.bias.value_slice()[0];
        let pad = self.padding();
        let mut y = Array2::<f32>::zeros((n, len));
        for r in 0..n {
            for i in 0..len {
                let mut acc = b;
                for (j, &wj) in w.iter().enumerate() {
                    acc += wj * x[[r, (i + j + len - pad) % len]];
                }
                y[[r, i]] = acc;
            }
        }
        if mode.is_train() {
            self.input = Some(x.to_owned());
        }
        y
    }

    pub fn backward(&mut self, dy: &Array2<f32>) -> Array2<f32> {
        let x = self.input.take().expect("circular conv backward without cache");
        let (n, len) = x.dim();
        let pad = self.padding();
        let w = self.weight.value_slice().to_vec();
        let mut dx = Array2::<f32>::zeros((n, len));
        let mut dw = vec![0.0f32; self.kernel];
        let mut db = 0.0f32;
        for r in 0..n {
            for i in 0..len {
                let g = dy[[r, i]];
                db += g;
                for (j, &wj) in w.iter().enumerate() {
                    let src = (i + j + len - pad) % len;
                    dw[j] += g * x[[r, src]];
                    dx[[r, src]] += g * wj;
                }
            }
        }
        if self.weight.trainable {
            for (g, d) in self.weight.grad_slice_mut().iter_mut().zip(dw) {
                *g += d;
            }
            self.bias.grad_slice_mut()[0] += db;
        }
        dx
    }
}

impl Module for CircularConv1d {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        f(&join(prefix, "weight"), &mut self.weight);
        f(&join(prefix, "bias"), &mut self.bias);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn averaging_kernel_preserves_constants() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut conv = CircularConv1d::new(5, &mut rng);
        conv.weight.value_slice_mut().fill(0.2);
        conv.bias.value_slice_mut()[0] = 0.0;
        let x = Array2::from_elem((1, 360), 0.73f32);
        let y = conv.forward(&x, Mode::Eval);
        assert!(y.iter().all(|&v| (v - 0.73).abs() < 1e-6));
    }

    #[test]
    fn wraps_across_the_seam() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut conv = CircularConv1d::new(5, &mut rng);
        conv.weight.value_slice_mut().copy_from_slice(&[1.0, 0.0, 0.0, 0.0, 0.0]);
        conv.bias.value_slice_mut()[0] = 0.0;
        let mut x = Array2::zeros((1, 360));
        x[[0, 358]] = 1.0;
        let y = conv.forward(&x, Mode::Eval);
        // Tap 0 reads x[i - 2]; bin 358 lands in output bin 0.
        assert_eq!(y[[0, 0]], 1.0);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut conv = CircularConv1d::new(5, &mut rng);
        let x = Array2::from_shape_simple_fn((2, 12), || rng.random_range(-1.0f32..1.0));
        let up = Array2::from_shape_simple_fn((2, 12), || rng.random_range(-1.0f32..1.0));
        let mut r = ChaCha8Rng::seed_from_u64(0);
        conv.forward(&x, Mode::Train(&mut r));
        let dx = conv.backward(&up);
        let loss = |c: &mut CircularConv1d, x: &Array2<f32>| -> f64 {
            c.forward(x, Mode::Eval).iter().zip(up.iter()).map(|(a, b)| (*a as f64) * (*b as f64)).sum()
        };
        let eps = 1e-2;
        for idx in [[0, 0], [1, 11], [0, 6]] {
            let mut xp = x.clone();
            xp[idx] += eps;
            let mut xm = x.clone();
            xm[idx] -= eps;
            let fd = (loss(&mut conv, &xp) - loss(&mut conv, &xm)) / (2.0 * eps as f64);
            assert!((fd - dx[idx] as f64).abs() < 1e-3);
        }
    }
}
