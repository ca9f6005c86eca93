use ndarray::{Array2, Array4};

use crate::mode::Mode;

/// `[N, C, H, W]` → `[N, C]` mean over the spatial axes.
pub fn global_avg_pool(x: &Array4<f32>) -> Array2<f32> {
    let (n, c, h, w) = x.dim();
    let x = x.as_standard_layout();
    let xs = x.as_slice().expect("standard layout");
    let hw = h * w;
    Array2::from_shape_fn((n, c), |(i, ch)| {
        let start = (i * c + ch) * hw;
        (xs[start..start + hw].iter().map(|&v| v as f64).sum::<f64>() / hw as f64) as f32
    })
}

pub fn global_avg_pool_backward(dy: &Array2<f32>, h: usize, w: usize) -> Array4<f32> {
    let (n, c) = dy.dim();
    let inv = 1.0 / (h * w) as f32;
    Array4::from_shape_fn((n, c, h, w), |(i, ch, _, _)| dy[[i, ch]] * inv)
}

/// Max pooling with implicit negative-infinity padding.
#[derive(Debug, Clone)]
pub struct MaxPool2d {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    argmax: Option<(Vec<usize>, (usize, usize, usize, usize))>,
}

impl MaxPool2d {
    pub fn new(kernel: usize, stride: usize, padding: usize) -> Self {
        Self { kernel, stride, padding, argmax: None }
    }

    pub fn output_hw(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.padding - self.kernel) / self.stride + 1,
            (w + 2 * self.padding - self.kernel) / self.stride + 1,
        )
    }

    pub fn forward(&mut self, x: &Array4<f32>, mode: Mode<'_>) -> Array4<f32> {
        let (n, c, h, w) = x.dim();
        let (ho, wo) = self.output_hw(h, w);
        let x = x.as_standard_layout();
        let xs = x.as_slice().expect("standard layout");
        let mut out = Array4::<f32>::zeros((n, c, ho, wo));
        let mut arg = vec![0usize; n * c * ho * wo];
        let os = out.as_slice_mut().expect("fresh array");
        let p = self.padding as isize;
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = f32::NEG_INFINITY;
                    let mut best_i = base;
                    for ky in 0..self.kernel {
                        let iy = (oy * self.stride + ky) as isize - p;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..self.kernel {
                            let ix = (ox * self.stride + kx) as isize - p;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let idx = base + iy as usize * w + ix as usize;
                            if xs[idx] > best {
                                best = xs[idx];
                                best_i = idx;
                            }
                        }
                    }
                    let o = (plane * ho + oy) * wo + ox;
                    os[o] = best;
                    arg[o] = best_i;
                }
            }
        }
        if mode.is_train() {
            self.argmax = Some((arg, (n, c, h, w)));
        }
        out
    }

    pub fn backward(&mut self, dy: &Array4<f32>) -> Array4<f32> {
        let (arg, dims) = self.argmax.take().expect("max-pool backward without cache");
        let mut dx = Array4::<f32>::zeros(dims);
        let dxs = dx.as_slice_mut().expect("fresh array");
        let dy = dy.as_standard_layout();
        for (g, &i) in dy.as_slice().expect("standard layout").iter().zip(arg.iter()) {
            dxs[i] += g;
        }
        dx
    }
}
