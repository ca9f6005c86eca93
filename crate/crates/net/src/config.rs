use serde::{Deserialize, Serialize};
use vichan_core::channel_stats::ChannelLabels;
use vichan_core::dataset::{LabelScales, LocationStats};

use crate::NetError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackboneKind {
    Residual34,
    CompactConv,
}

impl BackboneKind {
    pub const ALL: [BackboneKind; 2] = [BackboneKind::Residual34, BackboneKind::CompactConv];

    pub fn id(self) -> &'static str {
        match self {
            BackboneKind::Residual34 => "residual-34",
            BackboneKind::CompactConv => "compact-conv",
        }
    }

    pub fn parse(s: &str) -> Result<Self, NetError> {
        Self::ALL.into_iter().find(|b| b.id() == s).ok_or_else(|| NetError::UnknownBackbone(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Semantic,
    Depth,
    Location,
}

impl Modality {
    pub fn id(self) -> &'static str {
        match self {
            Modality::Semantic => "semantic",
            Modality::Depth => "depth",
            Modality::Location => "location",
        }
    }

    /// Accepts `semantic|sem`, `depth`, `location|gps|loc`.
    pub fn parse(s: &str) -> Result<Self, NetError> {
        match s.trim() {
            "semantic" | "sem" => Ok(Modality::Semantic),
            "depth" => Ok(Modality::Depth),
            "location" | "gps" | "loc" => Ok(Modality::Location),
            other => Err(NetError::Config(format!("unknown modality {other:?}"))),
        }
    }

    /// Parses a comma-separated list into canonical order without duplicates.
    pub fn parse_list(s: &str) -> Result<Vec<Self>, NetError> {
        let mut v: Vec<Self> = s.split(',').filter(|t| !t.trim().is_empty()).map(Self::parse).collect::<Result<_, _>>()?;
        v.sort();
        v.dedup();
        Ok(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Pl,
    Ds,
    Asa,
    Asd,
    Aps,
}

impl Target {
    pub const SCALARS: [Target; 4] = [Target::Pl, Target::Ds, Target::Asa, Target::Asd];

    pub fn id(self) -> &'static str {
        match self {
            Target::Pl => "pl",
            Target::Ds => "ds",
            Target::Asa => "asa",
            Target::Asd => "asd",
            Target::Aps => "aps",
        }
    }

    pub fn parse(s: &str) -> Result<Self, NetError> {
        [Target::Pl, Target::Ds, Target::Asa, Target::Asd, Target::Aps]
            .into_iter()
            .find(|t| t.id() == s)
            .ok_or_else(|| NetError::Config(format!("unknown target {s:?}")))
    }

    pub fn is_aps(self) -> bool {
        self == Target::Aps
    }

    pub fn output_dim(self) -> usize {
        if self.is_aps() {
            aps_bins()
        } else {
            1
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Target::Pl => "dB",
            Target::Ds => "ns",
            Target::Asa | Target::Asd => "deg",
            Target::Aps => "normalized",
        }
    }

    /// Divisor from physical to training units (1 for the APS).
    pub fn scale(self, scales: &LabelScales) -> f64 {
        match self {
            Target::Pl => scales.pl_db,
            Target::Ds => scales.ds_ns,
            Target::Asa => scales.asa_deg,
            Target::Asd => scales.asd_deg,
            Target::Aps => 1.0,
        }
    }

    /// Physical-unit target values.
    pub fn values(self, labels: &ChannelLabels) -> Vec<f64> {
        match self {
            Target::Pl => vec![labels.pl_db],
            Target::Ds => vec![labels.ds_ns],
            Target::Asa => vec![labels.asa_deg],
            Target::Asd => vec![labels.asd_deg],
            Target::Aps => labels.aps.clone(),
        }
    }
}

fn aps_bins() -> usize {
    vichan_core::channel_stats::APS_BINS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub backbone: BackboneKind,
    /// Freeze the backbone's early stages (weights and normalisation statistics).
    pub frozen_stages: bool,
    pub semantic_dropout: f32,
    pub aps_dropout: f32,
    pub feature_width: usize,
    pub modalities: Vec<Modality>,
    pub target: Target,
    pub location_norm: LocationStats,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            backbone: BackboneKind::Residual34,
            frozen_stages: true,
            semantic_dropout: 0.3,
            aps_dropout: 0.1,
            feature_width: 256,
            modalities: vec![Modality::Semantic, Modality::Depth, Modality::Location],
            target: Target::Pl,
            location_norm: LocationStats { mean_m: 0.0, std_m: 1.0 },
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        if self.modalities.is_empty() {
            return Err(NetError::Config("at least one modality must be active".into()));
        }
        if self.feature_width == 0 {
            return Err(NetError::Config("feature width must be positive".into()));
        }
        if !(self.location_norm.std_m > 0.0) {
            return Err(NetError::Config("location std must be positive".into()));
        }
        for p in [self.semantic_dropout, self.aps_dropout] {
            if !(0.0..1.0).contains(&p) {
                return Err(NetError::Config(format!("dropout {p} outside [0, 1)")));
            }
        }
        Ok(())
    }

    pub fn has(&self, m: Modality) -> bool {
        self.modalities.contains(&m)
    }

    pub fn fused_width(&self) -> usize {
        self.feature_width * self.modalities.len()
    }
}
