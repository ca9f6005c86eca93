use ndarray::{linalg::general_mat_mul, Array2, Array4, ArrayView2, ArrayViewMut2};
use rand_chacha::ChaCha8Rng;

use crate::init::{kaiming_normal_fan_out, uniform_fan_in};
use crate::mode::Mode;
use crate::param::{join, Module, Param};

/// Square-kernel 2-D convolution geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeometry {
    pub fn new(in_ch: usize, out_ch: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        Self { in_ch, out_ch, kernel, stride, padding }
    }

    pub fn output_hw(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.padding - self.kernel) / self.stride + 1,
            (w + 2 * self.padding - self.kernel) / self.stride + 1,
        )
    }

    pub fn col_rows(&self) -> usize {
        self.in_ch * self.kernel * self.kernel
    }

    /// Multiply-accumulates for one sample of spatial size `h × w`.
    pub fn macs(&self, h: usize, w: usize) -> u64 {
        let (ho, wo) = self.output_hw(h, w);
        (self.col_rows() * self.out_ch * ho * wo) as u64
    }
}

/// Output sizes below this many pixels share one GEMM across the batch;
/// per-sample products that narrow run well below peak.
const BATCHED_HW: usize = 128;

/// Convolution lowered to GEMM through im2col, NCHW layout.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub geom: ConvGeometry,
    /// `[out, in, k, k]`
    pub weight: Param,
    pub bias: Option<Param>,
    /// Input shape and its im2col columns (per-sample blocks, or one batched
    /// matrix for small outputs), kept by a
    /// training forward pass so backward does not lower the input again.
    cols: Option<((usize, usize, usize, usize), Vec<f32>)>,
    /// Reused column buffers; im2col and GEMM overwrite every element.
    spare: Vec<f32>,
    dcol: Vec<f32>,
}

impl Conv2d {
    pub fn new(geom: ConvGeometry, bias: bool, rng: &mut ChaCha8Rng) -> Self {
        let shape = [geom.out_ch, geom.in_ch, geom.kernel, geom.kernel];
        let weight = Param::weight(kaiming_normal_fan_out(&shape, rng));
        let bias = bias.then(|| Param::weight(uniform_fan_in(&[geom.out_ch], geom.col_rows(), rng)));
        Self { geom, weight, bias, cols: None, spare: Vec::new(), dcol: Vec::new() }
    }

    fn weight_matrix(&self) -> ArrayView2<'_, f32> {
        let g = &self.geom;
        ArrayView2::from_shape((g.out_ch, g.col_rows()), self.weight.value_slice())
            .expect("weight shape")
    }

    pub fn forward(&mut self, x: &Array4<f32>, mode: Mode<'_>) -> Array4<f32> {
        let (n, c, h, w) = x.dim();
        assert_eq!(c, self.geom.in_ch, "conv input channels");
        let (ho, wo) = self.geom.output_hw(h, w);
        let hw = ho * wo;
        let oc = self.geom.out_ch;
        let rows = self.geom.col_rows();
        let keep = mode.is_train() && self.weight.trainable;
        let batched = hw < BATCHED_HW;
        let mut spare = std::mem::take(&mut self.spare);
        let mut out = Array4::<f32>::zeros((n, oc, ho, wo));
        let x = x.as_standard_layout();
        let xs = x.as_slice().expect("standard layout");
        let wm = self.weight_matrix();
        let out_slice = out.as_slice_mut().expect("fresh array");
        let sample = |i: usize| &xs[i * c * h * w..(i + 1) * c * h * w];
        let col = if batched {
            // One GEMM over the whole batch: sample i owns columns i·hw..(i+1)·hw.
            let ld = n * hw;
            let mut col = take_resized(&mut spare, rows * ld);
            for i in 0..n {
                im2col(sample(i), c, h, w, &self.geom, ho, wo, &mut col[i * hw..], ld);
            }
            let colv = ArrayView2::from_shape((rows, ld), &col[..]).expect("col shape");
            let mut outm = Array2::<f32>::zeros((oc, ld));
            general_mat_mul(1.0, &wm, &colv, 0.0, &mut outm);
            let om = outm.as_slice().expect("fresh array");
            for i in 0..n {
                for o in 0..oc {
                    out_slice[(i * oc + o) * hw..(i * oc + o + 1) * hw].copy_from_slice(&om[o * ld + i * hw..o * ld + (i + 1) * hw]);
                }
            }
            col
        } else {
            let block = rows * hw;
            let mut col = take_resized(&mut spare, if keep { n * block } else { block });
            for i in 0..n {
                let cb = if keep { &mut col[i * block..(i + 1) * block] } else { &mut col[..] };
                im2col(sample(i), c, h, w, &self.geom, ho, wo, cb, hw);
                let colv = ArrayView2::from_shape((rows, hw), &*cb).expect("col shape");
                let dst = &mut out_slice[i * oc * hw..(i + 1) * oc * hw];
                let mut dstv = ArrayViewMut2::from_shape((oc, hw), dst).expect("out shape");
                general_mat_mul(1.0, &wm, &colv, 0.0, &mut dstv);
            }
            col
        };
        if let Some(b) = &self.bias {
            for (plane, &bv) in out_slice.chunks_mut(hw).zip(b.value_slice().iter().cycle()) {
                plane.iter_mut().for_each(|v| *v += bv);
            }
        }
        if mode.is_train() && keep {
            self.cols = Some(((n, c, h, w), col));
        } else {
            if mode.is_train() {
                self.cols = Some(((n, c, h, w), Vec::new()));
            }
            self.spare = col;
        }
        out
    }


    /// Accumulates weight gradients; returns the input gradient when requested.
    pub fn backward(&mut self, dy: &Array4<f32>, need_input_grad: bool) -> Option<Array4<f32>> {
        let ((n, c, h, w), cols) = self.cols.take().expect("conv backward without cached input");
        let (ho, wo) = self.geom.output_hw(h, w);
        let hw = ho * wo;
        let rows = self.geom.col_rows();
        let oc = self.geom.out_ch;
        let dy = dy.as_standard_layout();
        let dys = dy.as_slice().expect("standard layout");
        let mut dx = need_input_grad.then(|| Array4::<f32>::zeros((n, c, h, w)));
        let trainable = self.weight.trainable;
        let wm = ArrayView2::from_shape((oc, rows), self.weight.value.as_slice().expect("contiguous"))
            .expect("weight shape");
        let mut dw = ArrayViewMut2::from_shape((oc, rows), self.weight.grad.as_slice_mut().expect("contiguous"))
            .expect("grad shape");
        if hw < BATCHED_HW {
            let ld = n * hw;
            let mut dym = Array2::<f32>::zeros((oc, ld));
            let dm = dym.as_slice_mut().expect("fresh array");
            for i in 0..n {
                for o in 0..oc {
                    dm[o * ld + i * hw..o * ld + (i + 1) * hw].copy_from_slice(&dys[(i * oc + o) * hw..(i * oc + o + 1) * hw]);
                }
            }
            if trainable {
                let colv = ArrayView2::from_shape((rows, ld), &cols[..]).expect("col shape");
                general_mat_mul(1.0, &dym, &colv.t(), 1.0, &mut dw);
            }
            if let Some(dx) = dx.as_mut() {
                self.dcol.resize(rows * ld, 0.0);
                let mut dcolv = ArrayViewMut2::from_shape((rows, ld), &mut self.dcol[..]).expect("dcol shape");
                general_mat_mul(1.0, &wm.t(), &dym, 0.0, &mut dcolv);
                let dxs = dx.as_slice_mut().expect("fresh array");
                for i in 0..n {
                    col2im(&self.dcol[i * hw..], c, h, w, &self.geom, ho, wo, &mut dxs[i * c * h * w..(i + 1) * c * h * w], ld);
                }
            }
        } else {
            let mut dcol = take_resized(&mut self.dcol, rows * hw);
            for i in 0..n {
                let dyv = ArrayView2::from_shape((oc, hw), &dys[i * oc * hw..(i + 1) * oc * hw]).expect("dy shape");
                if trainable {
                    let colv = ArrayView2::from_shape((rows, hw), &cols[i * rows * hw..(i + 1) * rows * hw]).expect("col shape");
                    general_mat_mul(1.0, &dyv, &colv.t(), 1.0, &mut dw);
                }
                if let Some(dx) = dx.as_mut() {
                    let mut dcolv = ArrayViewMut2::from_shape((rows, hw), &mut dcol[..]).expect("dcol shape");
                    general_mat_mul(1.0, &wm.t(), &dyv, 0.0, &mut dcolv);
                    let dxs = dx.as_slice_mut().expect("fresh array");
                    col2im(&dcol, c, h, w, &self.geom, ho, wo, &mut dxs[i * c * h * w..(i + 1) * c * h * w], hw);
                }
            }
            self.dcol = dcol;
        }
        self.spare = cols;
        if let Some(b) = self.bias.as_mut() {
            if b.trainable {
                let g = b.grad_slice_mut();
                for i in 0..n {
                    for (o, gv) in g.iter_mut().enumerate() {
                        let start = (i * oc + o) * hw;
                        *gv += dys[start..start + hw].iter().sum::<f32>();
                    }
                }
            }
        }
        dx
    }

    pub fn clear_cache(&mut self) {
        self.cols = None;
    }
}

impl Module for Conv2d {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        f(&join(prefix, "weight"), &mut self.weight);
        if let Some(b) = self.bias.as_mut() {
            f(&join(prefix, "bias"), b);
        }
    }
}

fn take_resized(buf: &mut Vec<f32>, len: usize) -> Vec<f32> {
    let mut v = std::mem::take(buf);
    v.resize(len, 0.0);
    v
}

/// Output columns `ox` whose input column `ox·s + kj − p` lies inside `[0, w)`.
fn valid_range(kj: usize, s: usize, p: usize, w: usize, wo: usize) -> (usize, usize) {
    let lo = p.saturating_sub(kj).div_ceil(s).min(wo);
    let hi = if w + p > kj { ((w + p - kj - 1) / s + 1).min(wo) } else { 0 };
    (lo, hi.max(lo))
}

#[allow(clippy::too_many_arguments)]
fn im2col(x: &[f32], c: usize, h: usize, w: usize, g: &ConvGeometry, ho: usize, wo: usize, col: &mut [f32], ld: usize) {
    let (k, s, p) = (g.kernel, g.stride, g.padding);
    for ci in 0..c {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for ki in 0..k {
            for kj in 0..k {
                let row = (ci * k + ki) * k + kj;
                let dst = &mut col[row * ld..row * ld + ho * wo];
                let (lo, hi) = valid_range(kj, s, p, w, wo);
                for oy in 0..ho {
                    let iy = (oy * s + ki) as isize - p as isize;
                    let drow = &mut dst[oy * wo..(oy + 1) * wo];
                    if iy < 0 || iy >= h as isize {
                        drow.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    drow[..lo].fill(0.0);
                    drow[hi..].fill(0.0);
                    if s == 1 {
                        let off = lo + kj - p;
                        drow[lo..hi].copy_from_slice(&src[off..off + hi - lo]);
                    } else if hi > lo {
                        let from = &src[lo * s + kj - p..];
                        for (d, &v) in drow[lo..hi].iter_mut().zip(from.iter().step_by(s)) {
                            *d = v;
                        }
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn col2im(col: &[f32], c: usize, h: usize, w: usize, g: &ConvGeometry, ho: usize, wo: usize, x: &mut [f32], ld: usize) {
    let (k, s, p) = (g.kernel, g.stride, g.padding);
    for ci in 0..c {
        let plane = &mut x[ci * h * w..(ci + 1) * h * w];
        for ki in 0..k {
            for kj in 0..k {
                let row = (ci * k + ki) * k + kj;
                let src = &col[row * ld..row * ld + ho * wo];
                let (lo, hi) = valid_range(kj, s, p, w, wo);
                for oy in 0..ho {
                    let iy = (oy * s + ki) as isize - p as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let drow = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    let srow = &src[oy * wo..(oy + 1) * wo];
                    if hi > lo {
                        let to = drow[lo * s + kj - p..].iter_mut().step_by(s);
                        for (d, &v) in to.zip(&srow[lo..hi]) {
                            *d += v;
                        }
                    }
                }
            }
        }
    }
}
