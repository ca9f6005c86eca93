//! Training configuration with per-target defaults.

use serde::{Deserialize, Serialize};
use vichan_core::losses::LossConfig;
use vichan_net::{BackboneKind, Modality, ModelConfig, OptimConfig, OptimizerKind, Target};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SchedulerConfig {
    /// Multiply the learning rate by `factor` after `patience` epochs without
    /// validation improvement.
    Plateau { factor: f64, patience: usize },
    /// Cosine annealing to zero, restarting after `t0`, then `t0·t_mult`, ... epochs.
    CosineWarmRestarts { t0: usize, t_mult: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub target: Target,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    /// Learning rate for the semantic branch; `None` shares `lr`.
    pub semantic_lr: Option<f64>,
    pub weight_decay: f64,
    pub clip_norm: f64,
    /// Early-stop after this many epochs without validation improvement.
    pub patience: usize,
    pub scheduler: SchedulerConfig,
    pub seed: u64,
    pub test_area: u32,
    pub val_fraction: f64,
    pub backbone: BackboneKind,
    pub frozen_stages: bool,
    pub modalities: Vec<Modality>,
    pub loss: LossConfig,
}

impl TrainConfig {
    /// Published hyperparameters for `target`.
    pub fn for_target(target: Target) -> Self {
        let all = vec![Modality::Semantic, Modality::Depth, Modality::Location];
        if target.is_aps() {
            Self {
                target,
                batch_size: 8,
                max_epochs: 100,
                optimizer: OptimizerKind::AdamW,
                lr: 3.5e-4,
                semantic_lr: Some(3.5e-5),
                weight_decay: 1e-4,
                clip_norm: 1.5,
                patience: 20,
                scheduler: SchedulerConfig::CosineWarmRestarts { t0: 10, t_mult: 2 },
                seed: 0,
                test_area: 4,
                val_fraction: 0.2,
                backbone: BackboneKind::Residual34,
                frozen_stages: true,
                modalities: all,
                loss: LossConfig::default(),
            }
        } else {
            Self {
                target,
                batch_size: 16,
                max_epochs: 100,
                optimizer: OptimizerKind::Adam,
                lr: 1e-3,
                semantic_lr: None,
                weight_decay: 1e-6,
                clip_norm: 1.0,
                patience: 20,
                scheduler: SchedulerConfig::Plateau { factor: 0.5, patience: 5 },
                seed: 0,
                test_area: 4,
                val_fraction: 0.2,
                backbone: BackboneKind::Residual34,
                frozen_stages: true,
                modalities: all,
                loss: LossConfig::default(),
            }
        }
    }

    /// Reads a TOML file; missing keys take the defaults of its `target`.
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let table: toml::Table = toml::from_str(s).map_err(|e| HarnessError::Config(e.to_string()))?;
        let target = match table.get("target").and_then(|v| v.as_str()) {
            Some(t) => Target::parse(t)?,
            None => Target::Pl,
        };
        Self::with_overrides(target, &table)
    }

    /// `target`'s defaults with every key of `table` replaced. A `target`
    /// key in the table is ignored.
    pub fn with_overrides(target: Target, table: &toml::Table) -> Result<Self> {
        let mut value = toml::Table::try_from(Self::for_target(target)).map_err(|e| HarnessError::Config(e.to_string()))?;
        for (k, v) in table {
            if k != "target" {
                value.insert(k.clone(), v.clone());
            }
        }
        let cfg: Self = value.try_into().map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch size and epoch count must be positive".into());
        }
        if !(self.lr > 0.0) || self.semantic_lr.is_some_and(|l| !(l > 0.0)) {
            return bad("learning rates must be positive".into());
        }
        if !(self.clip_norm > 0.0) || !(self.weight_decay >= 0.0) {
            return bad("clip bound must be positive and weight decay nonnegative".into());
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad(format!("val_fraction {} outside [0, 1)", self.val_fraction));
        }
        if self.modalities.is_empty() {
            return bad("at least one modality must be active".into());
        }
        match self.scheduler {
            SchedulerConfig::Plateau { factor, .. } if !(factor > 0.0 && factor <= 1.0) => bad(format!("plateau factor {factor}")),
            SchedulerConfig::CosineWarmRestarts { t0: 0, .. } | SchedulerConfig::CosineWarmRestarts { t_mult: 0, .. } => {
                bad("cosine periods must be positive".into())
            }
            _ => Ok(()),
        }?;
        self.loss.validate()?;
        Ok(())
    }

    /// `key = value` lines for every field that differs from the target defaults.
    pub fn overrides(&self) -> Vec<String> {
        let ours = serde_json::to_value(self).expect("config serialises");
        let base = serde_json::to_value(Self::for_target(self.target)).expect("config serialises");
        let (serde_json::Value::Object(ours), serde_json::Value::Object(base)) = (ours, base) else { unreachable!() };
        ours.iter().filter(|(k, v)| base.get(*k) != Some(v)).map(|(k, v)| format!("{k} = {v}")).collect()
    }

    pub fn optim_config(&self) -> OptimConfig {
        OptimConfig {
            kind: self.optimizer,
            semantic_lr: self.semantic_lr,
            ..OptimConfig::adam(self.lr, self.weight_decay)
        }
    }

    /// Model configuration; location statistics come from the training split.
    pub fn model_config(&self, location_norm: vichan_core::dataset::LocationStats) -> ModelConfig {
        ModelConfig {
            backbone: self.backbone,
            frozen_stages: self.frozen_stages,
            modalities: self.modalities.clone(),
            target: self.target,
            location_norm,
            ..ModelConfig::default()
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises")
    }
}
