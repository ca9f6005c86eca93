use ndarray::{Array1, Array2, Array4, Axis, IxDyn, ArrayD};

use crate::mode::Mode;
use crate::param::{join, Module, Param};

/// Per-channel batch normalisation over `(N, H, W)`.
#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Param,
    pub running_var: Param,
    pub eps: f32,
    pub momentum: f32,
    cache: Option<(Array4<f32>, Array1<f32>)>,
}

impl BatchNorm2d {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Param::filled(&[channels], 1.0),
            beta: Param::zeros(&[channels]),
            running_mean: Param::buffer(ArrayD::zeros(IxDyn(&[channels]))),
            running_var: Param::buffer(ArrayD::ones(IxDyn(&[channels]))),
            eps: 1e-5,
            momentum: 0.1,
            cache: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn forward(&mut self, x: &Array4<f32>, mode: Mode<'_>) -> Array4<f32> {
        let (n, c, h, w) = x.dim();
        assert_eq!(c, self.channels(), "batch-norm channels");
        let plane = h * w;
        let count = (n * plane) as f64;
        let gamma = self.gamma.value_slice().to_vec();
        let beta = self.beta.value_slice().to_vec();
        let x = x.as_standard_layout();
        let xs = x.as_slice().expect("standard layout");
        let mut y = Array4::<f32>::zeros((n, c, h, w));
        let ys = y.as_slice_mut().expect("fresh array");
        // Planes of channel `ch` sit at `(i·c + ch)·plane` for each sample `i`.
        let planes = |ch: usize| (0..n).map(move |i| (i * c + ch) * plane);
        if mode.is_train() {
            let mut mean = vec![0.0f32; c];
            let mut var = vec![0.0f32; c];
            for ch in 0..c {
                let m = planes(ch).map(|o| xs[o..o + plane].iter().map(|&v| v as f64).sum::<f64>()).sum::<f64>() / count;
                let v = planes(ch)
                    .map(|o| xs[o..o + plane].iter().map(|&v| (v as f64 - m).powi(2)).sum::<f64>())
                    .sum::<f64>()
                    / count;
                mean[ch] = m as f32;
                var[ch] = v as f32;
            }
            let inv_std = Array1::from_iter(var.iter().map(|&v| 1.0 / (v + self.eps).sqrt()));
            let mut xhat = Array4::<f32>::zeros((n, c, h, w));
            let xh = xhat.as_slice_mut().expect("fresh array");
            for ch in 0..c {
                let (m, s, g, b) = (mean[ch], inv_std[ch], gamma[ch], beta[ch]);
                for o in planes(ch) {
                    for ((d, yv), &v) in xh[o..o + plane].iter_mut().zip(&mut ys[o..o + plane]).zip(&xs[o..o + plane]) {
                        *d = (v - m) * s;
                        *yv = *d * g + b;
                    }
                }
            }
            let unbiased = if count > 1.0 { (count / (count - 1.0)) as f32 } else { 1.0 };
            let mom = self.momentum;
            let rm = self.running_mean.value_slice_mut();
            for ch in 0..c {
                rm[ch] = (1.0 - mom) * rm[ch] + mom * mean[ch];
            }
            let rv = self.running_var.value_slice_mut();
            for ch in 0..c {
                rv[ch] = (1.0 - mom) * rv[ch] + mom * var[ch] * unbiased;
            }
            self.cache = Some((xhat, inv_std));
        } else {
            let rm = self.running_mean.value_slice();
            let rv = self.running_var.value_slice();
            for ch in 0..c {
                let s = gamma[ch] / (rv[ch] + self.eps).sqrt();
                let shift = beta[ch] - rm[ch] * s;
                for o in planes(ch) {
                    for (yv, &v) in ys[o..o + plane].iter_mut().zip(&xs[o..o + plane]) {
                        *yv = v * s + shift;
                    }
                }
            }
        }
        y
    }

    pub fn backward(&mut self, dy: &Array4<f32>) -> Array4<f32> {
        self.backward_gated(dy, false)
    }

    /// Backward through a rectifier applied to this layer's output. The
    /// rectifier's mask is recomputed from the cached normalised input with
    /// the same arithmetic as the forward pass, so nothing else is stored.
    pub fn backward_through_relu(&mut self, dy: &Array4<f32>) -> Array4<f32> {
        self.backward_gated(dy, true)
    }

    fn backward_gated(&mut self, dy: &Array4<f32>, relu: bool) -> Array4<f32> {
        let (xhat, inv_std) = self.cache.take().expect("batch-norm backward without cache");
        let (n, c, h, w) = dy.dim();
        let plane = h * w;
        let count = (n * plane) as f32;
        let gamma = self.gamma.value_slice().to_vec();
        let beta = self.beta.value_slice().to_vec();
        let dy = dy.as_standard_layout();
        let dys = dy.as_slice().expect("standard layout");
        let xs = xhat.as_slice().expect("standard layout");
        let mut dx = Array4::<f32>::zeros((n, c, h, w));
        let dxs = dx.as_slice_mut().expect("fresh array");
        let trainable = self.gamma.trainable;
        for ch in 0..c {
            let (g, bt) = (gamma[ch], beta[ch]);
            let gate = |d: f32, xh: f32| if !relu || xh * g + bt > 0.0 { d } else { 0.0 };
            let mut sum_dy = 0.0f64;
            let mut sum_dy_xhat = 0.0f64;
            for i in 0..n {
                let o = (i * c + ch) * plane;
                let (mut a, mut b) = (0.0f32, 0.0f32);
                for (&d, &xh) in dys[o..o + plane].iter().zip(&xs[o..o + plane]) {
                    let d = gate(d, xh);
                    a += d;
                    b += d * xh;
                }
                sum_dy += a as f64;
                sum_dy_xhat += b as f64;
            }
            if trainable {
                self.gamma.grad_slice_mut()[ch] += sum_dy_xhat as f32;
                self.beta.grad_slice_mut()[ch] += sum_dy as f32;
            }
            let k = gamma[ch] * inv_std[ch] / count;
            let (sd, sdx) = (sum_dy as f32, sum_dy_xhat as f32);
            for i in 0..n {
                let o = (i * c + ch) * plane;
                for ((out, &d), &xh) in dxs[o..o + plane].iter_mut().zip(&dys[o..o + plane]).zip(&xs[o..o + plane]) {
                    *out = k * (count * gate(d, xh) - sd - xh * sdx);
                }
            }
        }
        dx
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}

impl Module for BatchNorm2d {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        f(&join(prefix, "weight"), &mut self.gamma);
        f(&join(prefix, "bias"), &mut self.beta);
        f(&join(prefix, "running_mean"), &mut self.running_mean);
        f(&join(prefix, "running_var"), &mut self.running_var);
    }
}

/// Layer normalisation over the feature axis of `[N, D]`.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: Param,
    pub beta: Param,
    pub eps: f32,
    cache: Option<(Array2<f32>, Array1<f32>)>,
}

impl LayerNorm {
    pub fn new(dim: usize) -> Self {
        Self { gamma: Param::filled(&[dim], 1.0), beta: Param::zeros(&[dim]), eps: 1e-5, cache: None }
    }

    pub fn forward(&mut self, x: &Array2<f32>, mode: Mode<'_>) -> Array2<f32> {
        let (n, d) = x.dim();
        assert_eq!(d, self.gamma.len(), "layer-norm width");
        let gamma = self.gamma.value_slice();
        let beta = self.beta.value_slice();
        let mut xhat = x.to_owned();
        let mut inv = Array1::<f32>::zeros(n);
        for (i, mut row) in xhat.axis_iter_mut(Axis(0)).enumerate() {
            let m = row.iter().map(|&v| v as f64).sum::<f64>() / d as f64;
            let v = row.iter().map(|&v| (v as f64 - m).powi(2)).sum::<f64>() / d as f64;
            let s = 1.0 / (v as f32 + self.eps).sqrt();
            inv[i] = s;
            let m = m as f32;
            row.mapv_inplace(|v| (v - m) * s);
        }
        let mut y = xhat.clone();
        for mut row in y.axis_iter_mut(Axis(0)) {
            for (k, v) in row.iter_mut().enumerate() {
                *v = *v * gamma[k] + beta[k];
            }
        }
        if mode.is_train() {
            self.cache = Some((xhat, inv));
        }
        y
    }

    pub fn backward(&mut self, dy: &Array2<f32>) -> Array2<f32> {
        let (xhat, inv) = self.cache.take().expect("layer-norm backward without cache");
        let (n, d) = dy.dim();
        let gamma = self.gamma.value_slice().to_vec();
        if self.gamma.trainable {
            let gg = self.gamma.grad_slice_mut();
            for i in 0..n {
                for k in 0..d {
                    gg[k] += dy[[i, k]] * xhat[[i, k]];
                }
            }
            let bg = self.beta.grad_slice_mut();
            for i in 0..n {
                for k in 0..d {
                    bg[k] += dy[[i, k]];
                }
            }
        }
        let mut dx = Array2::<f32>::zeros((n, d));
        for i in 0..n {
            let mut s1 = 0.0f32;
            let mut s2 = 0.0f32;
            for k in 0..d {
                let dxh = dy[[i, k]] * gamma[k];
                s1 += dxh;
                s2 += dxh * xhat[[i, k]];
            }
            let df = d as f32;
            for k in 0..d {
                let dxh = dy[[i, k]] * gamma[k];
                dx[[i, k]] = inv[i] / df * (df * dxh - s1 - xhat[[i, k]] * s2);
            }
        }
        dx
    }
}

impl Module for LayerNorm {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        f(&join(prefix, "weight"), &mut self.gamma);
        f(&join(prefix, "bias"), &mut self.beta);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn batch_norm_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Array4::from_shape_simple_fn((2, 3, 2, 2), || rng.random_range(-1.0f32..1.0));
        let up = Array4::from_shape_simple_fn((2, 3, 2, 2), || rng.random_range(-1.0f32..1.0));
        let mut bn = BatchNorm2d::new(3);
        bn.gamma.value_slice_mut().copy_from_slice(&[0.5, 1.5, -1.0]);
        let mut r = ChaCha8Rng::seed_from_u64(0);
        bn.forward(&x, Mode::Train(&mut r));
        let dx = bn.backward(&up);
        let loss = |bn: &mut BatchNorm2d, x: &Array4<f32>| -> f64 {
            let mut r = ChaCha8Rng::seed_from_u64(0);
            let y = bn.forward(x, Mode::Train(&mut r));
            bn.clear_cache();
            y.iter().zip(up.iter()).map(|(a, b)| (*a as f64) * (*b as f64)).sum()
        };
        let eps = 1e-2;
        for idx in [[0, 0, 0, 0], [1, 2, 1, 0], [0, 1, 1, 1]] {
            let mut xp = x.clone();
            xp[idx] += eps;
            let mut xm = x.clone();
            xm[idx] -= eps;
            let fd = (loss(&mut bn, &xp) - loss(&mut bn, &xm)) / (2.0 * eps as f64);
            assert!((fd - dx[idx] as f64).abs() < 2e-3, "{idx:?}: fd {fd} vs {}", dx[idx]);
        }
    }

    #[test]
    fn layer_norm_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Array2::from_shape_simple_fn((2, 6), || rng.random_range(-1.0f32..1.0));
        let up = Array2::from_shape_simple_fn((2, 6), || rng.random_range(-1.0f32..1.0));
        let mut ln = LayerNorm::new(6);
        let mut r = ChaCha8Rng::seed_from_u64(0);
        ln.forward(&x, Mode::Train(&mut r));
        let dx = ln.backward(&up);
        let loss = |ln: &mut LayerNorm, x: &Array2<f32>| -> f64 {
            let y = ln.forward(x, Mode::Eval);
            y.iter().zip(up.iter()).map(|(a, b)| (*a as f64) * (*b as f64)).sum()
        };
        let eps = 1e-2;
        for idx in [[0, 0], [1, 3], [1, 5]] {
            let mut xp = x.clone();
            xp[idx] += eps;
            let mut xm = x.clone();
            xm[idx] -= eps;
            let fd = (loss(&mut ln, &xp) - loss(&mut ln, &xm)) / (2.0 * eps as f64);
            assert!((fd - dx[idx] as f64).abs() < 2e-3, "{idx:?}: fd {fd} vs {}", dx[idx]);
        }
    }
}
