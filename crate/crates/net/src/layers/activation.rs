use ndarray::{Array, Dimension, Zip};

pub fn relu_inplace<D: Dimension>(x: &mut Array<f32, D>) {
    x.mapv_inplace(|v| v.max(0.0));
}

/// Gradient through a rectifier given its output.
pub fn relu_backward<D: Dimension>(dy: &Array<f32, D>, y: &Array<f32, D>) -> Array<f32, D> {
    let mut dx = dy.clone();
    Zip::from(&mut dx).and(y).for_each(|d, &o| {
        if o <= 0.0 {
            *d = 0.0;
        }
    });
    dx
}

pub fn sigmoid(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` in the overflow-free `max(x, 0) + ln1p(e^-|x|)` form.
pub fn softplus(x: f32) -> f32 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn softplus_grad(x: f32) -> f32 {
    sigmoid(x)
}
