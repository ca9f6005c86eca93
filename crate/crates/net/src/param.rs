//! Named parameter storage shared by every layer.

use ndarray::{ArrayD, IxDyn};

/// Whether a tensor is a learnable weight or a running statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    /// Non-learnable state such as batch-norm running statistics.
    Buffer,
}

#[derive(Debug, Clone)]
pub struct Param {
    pub kind: ParamKind,
    pub value: ArrayD<f32>,
    pub grad: ArrayD<f32>,
    /// Frozen weights keep their value across optimizer steps.
    pub trainable: bool,
}

impl Param {
    pub fn weight(value: ArrayD<f32>) -> Self {
        let grad = ArrayD::zeros(value.raw_dim());
        Self { kind: ParamKind::Weight, value, grad, trainable: true }
    }

    pub fn buffer(value: ArrayD<f32>) -> Self {
        Self { kind: ParamKind::Buffer, value, grad: ArrayD::zeros(IxDyn(&[0])), trainable: false }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::weight(ArrayD::zeros(IxDyn(shape)))
    }

    pub fn filled(shape: &[usize], v: f32) -> Self {
        Self::weight(ArrayD::from_elem(IxDyn(shape), v))
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn value_slice(&self) -> &[f32] {
        self.value.as_slice().expect("parameters are contiguous")
    }

    pub fn value_slice_mut(&mut self) -> &mut [f32] {
        self.value.as_slice_mut().expect("parameters are contiguous")
    }

    pub fn grad_slice_mut(&mut self) -> &mut [f32] {
        self.grad.as_slice_mut().expect("gradients are contiguous")
    }
}

/// Anything that owns parameters. Names are dot-separated paths.
pub trait Module {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param));

    fn set_trainable(&mut self, trainable: bool) {
        self.visit("", &mut |_, p| {
            if p.kind == ParamKind::Weight {
                p.trainable = trainable;
            }
        });
    }

    fn zero_grad(&mut self) {
        self.visit("", &mut |_, p| {
            if p.kind == ParamKind::Weight {
                p.zero_grad();
            }
        });
    }

    /// (total, trainable) weight counts; buffers are excluded.
    fn param_counts(&mut self) -> (usize, usize) {
        let mut total = 0;
        let mut trainable = 0;
        self.visit("", &mut |_, p| {
            if p.kind == ParamKind::Weight {
                total += p.len();
                if p.trainable {
                    trainable += p.len();
                }
            }
        });
        (total, trainable)
    }
}

pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}
