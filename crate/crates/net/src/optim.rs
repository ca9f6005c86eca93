//! Adaptive-moment optimisers with named parameter groups and global
//! gradient-norm clipping.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::param::{Module, ParamKind};

/// Parameters under this prefix form the semantic learning-rate group.
pub const SEMANTIC_PREFIX: &str = "semantic.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    /// Weight decay folded into the gradient (L2 penalty).
    Adam,
    /// Decoupled weight decay.
    AdamW,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    /// Learning rate for the semantic branch; `None` uses `lr`.
    pub semantic_lr: Option<f64>,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OptimConfig {
    pub fn adam(lr: f64, weight_decay: f64) -> Self {
        Self { kind: OptimizerKind::Adam, lr, semantic_lr: None, weight_decay, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    pub fn adamw(lr: f64, semantic_lr: f64, weight_decay: f64) -> Self {
        Self { kind: OptimizerKind::AdamW, semantic_lr: Some(semantic_lr), ..Self::adam(lr, weight_decay) }
    }

    pub fn lr_for(&self, name: &str) -> f64 {
        match self.semantic_lr {
            Some(lr) if name.starts_with(SEMANTIC_PREFIX) => lr,
            _ => self.lr,
        }
    }
}

/// First and second moments for one parameter tensor.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Moments {
    pub m: Vec<f32>,
    pub v: Vec<f32>,
}

#[derive(Debug, Clone)]
pub struct Optimizer {
    pub config: OptimConfig,
    pub step: u64,
    pub state: BTreeMap<String, Moments>,
}

impl Optimizer {
    pub fn new(config: OptimConfig) -> Self {
        Self { config, step: 0, state: BTreeMap::new() }
    }

    /// One update of every trainable weight. `lr_scale` is the scheduler
    /// multiplier applied to both groups' base rates.
    pub fn step(&mut self, model: &mut dyn Module, lr_scale: f64) {
        self.step += 1;
        let c = self.config.clone();
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let state = &mut self.state;
        model.visit("", &mut |name, p| {
            if p.kind != ParamKind::Weight || !p.trainable {
                return;
            }
            let lr = c.lr_for(name) * lr_scale;
            let mom = state.entry(name.to_string()).or_insert_with(|| Moments { m: vec![0.0; p.len()], v: vec![0.0; p.len()] });
            let grad = p.grad.as_slice().expect("contiguous gradient");
            let w = p.value.as_slice_mut().expect("parameters are contiguous");
            let (l2, decoupled) = match c.kind {
                OptimizerKind::Adam => (c.weight_decay, 0.0),
                OptimizerKind::AdamW => (0.0, c.weight_decay),
            };
            let cells = w.iter_mut().zip(grad).zip(mom.m.iter_mut().zip(mom.v.iter_mut()));
            for ((wi, &gi), (mi, vi)) in cells {
                let x = *wi as f64;
                let g = gi as f64 + l2 * x;
                let m = c.beta1 * *mi as f64 + (1.0 - c.beta1) * g;
                let v = c.beta2 * *vi as f64 + (1.0 - c.beta2) * g * g;
                *mi = m as f32;
                *vi = v as f32;
                *wi = (x - lr * (m / bc1) / ((v / bc2).sqrt() + c.eps) - lr * decoupled * x) as f32;
            }
        });
    }
}

/// L2 norm over all trainable gradients.
pub fn grad_norm(model: &mut dyn Module) -> f64 {
    let mut sq = 0.0f64;
    model.visit("", &mut |_, p| {
        if p.kind == ParamKind::Weight && p.trainable {
            sq += p.grad.iter().map(|&g| (g as f64) * (g as f64)).sum::<f64>();
        }
    });
    sq.sqrt()
}

/// Rescales trainable gradients so their global norm is at most `max_norm`.
/// Returns the norms before and after clipping.
pub fn clip_grad_norm(model: &mut dyn Module, max_norm: f64) -> (f64, f64) {
    let before = grad_norm(model);
    if before > max_norm && before.is_finite() {
        // Shrink slightly below the bound so f32 rounding cannot exceed it.
        let scale = (max_norm / before * (1.0 - 1e-7)) as f32;
        model.visit("", &mut |_, p| {
            if p.kind == ParamKind::Weight && p.trainable {
                p.grad.mapv_inplace(|g| g * scale);
            }
        });
    }
    (before, grad_norm(model))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::param::{join, Param};
    use ndarray::{ArrayD, IxDyn};

    struct Toy {
        semantic: Param,
        other: Param,
        frozen: Param,
    }

    impl Module for Toy {
        fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
            f(&join(prefix, "semantic.w"), &mut self.semantic);
            f(&join(prefix, "head.w"), &mut self.other);
            f(&join(prefix, "frozen.w"), &mut self.frozen);
        }
    }

    fn toy() -> Toy {
        let p = |v: f32| Param::weight(ArrayD::from_elem(IxDyn(&[3]), v));
        let mut t = Toy { semantic: p(1.0), other: p(1.0), frozen: p(1.0) };
        t.frozen.trainable = false;
        t
    }

    #[test]
    fn first_adam_step_moves_by_the_learning_rate() {
        let mut t = toy();
        for p in [&mut t.semantic, &mut t.other, &mut t.frozen] {
            p.grad.fill(0.5);
        }
        let mut opt = Optimizer::new(OptimConfig::adamw(1e-2, 1e-3, 0.0));
        opt.step(&mut t, 1.0);
        assert!((t.other.value[[0]] - (1.0 - 1e-2)).abs() < 1e-6);
        assert!((t.semantic.value[[0]] - (1.0 - 1e-3)).abs() < 1e-6);
        assert_eq!(t.frozen.value[[0]], 1.0);
        assert!(!opt.state.contains_key("frozen.w"));
    }

    #[test]
    fn decoupled_and_coupled_decay_differ() {
        let mut a = toy();
        let mut b = toy();
        Optimizer::new(OptimConfig { kind: OptimizerKind::Adam, ..OptimConfig::adam(0.1, 0.5) }).step(&mut a, 1.0);
        Optimizer::new(OptimConfig { kind: OptimizerKind::AdamW, ..OptimConfig::adam(0.1, 0.5) }).step(&mut b, 1.0);
        // Zero gradient: L2 decay goes through the normalised moment, a full lr step.
        assert!((a.other.value[[0]] - 0.9).abs() < 1e-5);
        assert!((b.other.value[[0]] - 0.95).abs() < 1e-6);
    }

    #[test]
    fn clipping_bounds_the_norm() {
        let mut t = toy();
        t.semantic.grad.fill(3.0);
        t.other.grad.fill(4.0);
        t.frozen.grad.fill(100.0);
        let (before, after) = clip_grad_norm(&mut t, 1.0);
        assert!((before - (27.0f64 + 48.0).sqrt()).abs() < 1e-9);
        assert!(after <= 1.0 + 1e-6 && after > 0.999);
        let (b2, a2) = clip_grad_norm(&mut t, 5.0);
        assert_eq!(b2, a2);
    }
}
