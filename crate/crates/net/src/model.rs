//! The full predictor: active branches → gated fusion → target head.

use ndarray::{Array1, Array2, Array4};
use rand_chacha::ChaCha8Rng;
use vichan_core::geo::LatLon;
use vichan_core::scene::rng::{stream_rng, Stream};

use crate::branches::{DepthBranch, LocationBranch, SemanticBranch};
use crate::config::{Modality, ModelConfig};
use crate::fusion::SeFusion;
use crate::heads::{ApsHead, ScalarHead};
use crate::mode::Mode;
use crate::param::{join, Module, Param};
use crate::NetError;

/// Inputs for one batch. Every field is optional; the model only reads the
/// ones its configuration activates.
#[derive(Debug, Clone, Default)]
pub struct Batch {
    /// Raw `N × 3 × 224 × 224` semantic images.
    pub semantic: Option<Array4<f32>>,
    /// Cached output of the frozen early stages; preferred over `semantic`.
    pub semantic_features: Option<Array4<f32>>,
    pub depth: Option<Array4<f32>>,
    pub locations: Option<Vec<(LatLon, LatLon)>>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.semantic
            .as_ref()
            .map(|a| a.dim().0)
            .or(self.semantic_features.as_ref().map(|a| a.dim().0))
            .or(self.depth.as_ref().map(|a| a.dim().0))
            .or(self.locations.as_ref().map(Vec::len))
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone)]
pub struct Prediction {
    /// `N × 1` for scalar targets, `N × 360` for the APS.
    pub output: Array2<f32>,
    pub gate: Array1<f32>,
}

#[derive(Debug, Clone)]
pub enum Head {
    Scalar(ScalarHead),
    Aps(ApsHead),
}

#[derive(Debug, Clone)]
pub struct ChannelPredictor {
    pub config: ModelConfig,
    pub semantic: Option<SemanticBranch>,
    pub depth: Option<DepthBranch>,
    pub location: Option<LocationBranch>,
    pub fusion: SeFusion,
    pub head: Head,
}

impl ChannelPredictor {
    /// Initialises every weight from the `Init` stream of `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, NetError> {
        config.validate()?;
        crate::tune_allocator();
        let mut rng = stream_rng(seed, Stream::Init, 0);
        Ok(Self::with_rng(config, &mut rng))
    }

    fn with_rng(config: ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let w = config.feature_width;
        let semantic = config
            .has(Modality::Semantic)
            .then(|| SemanticBranch::new(config.backbone, config.frozen_stages, w, config.semantic_dropout, rng));
        let depth = config.has(Modality::Depth).then(|| DepthBranch::new(w, rng));
        let location = config.has(Modality::Location).then(|| LocationBranch::new(config.location_norm, w, rng));
        let fused = config.fused_width();
        let fusion = SeFusion::new(fused, rng);
        let head = if config.target.is_aps() {
            Head::Aps(ApsHead::new(fused, config.target.output_dim(), config.aps_dropout, rng))
        } else {
            Head::Scalar(ScalarHead::new(fused, rng))
        };
        Self { config, semantic, depth, location, fusion, head }
    }

    /// Frozen early-stage features for caching. `None` when the semantic
    /// branch is inactive or its early stages train.
    pub fn semantic_features(&mut self, images: &Array4<f32>) -> Option<Array4<f32>> {
        let branch = self.semantic.as_mut()?;
        branch.backbone.frozen.then(|| branch.backbone.early_forward(images, Mode::Eval))
    }

    /// Per-branch 256-d features in canonical modality order.
    pub fn branch_features(&mut self, batch: &Batch, mut mode: Mode<'_>) -> Result<Vec<Array2<f32>>, NetError> {
        let mut feats = Vec::with_capacity(3);
        if let Some(branch) = self.semantic.as_mut() {
            let cached = batch.semantic_features.as_ref().filter(|_| branch.backbone.frozen);
            let f = match (cached, batch.semantic.as_ref()) {
                (Some(f), _) => branch.forward_features(f, mode.reborrow()),
                (None, Some(x)) => {
                    check_image(x, "semantic")?;
                    branch.forward(x, mode.reborrow())
                }
                (None, None) => return Err(NetError::MissingModality(Modality::Semantic)),
            };
            feats.push(f);
        }
        if let Some(branch) = self.depth.as_mut() {
            let x = batch.depth.as_ref().ok_or(NetError::MissingModality(Modality::Depth))?;
            check_image(x, "depth")?;
            feats.push(branch.forward(x, mode.reborrow()));
        }
        if let Some(branch) = self.location.as_mut() {
            let pairs = batch.locations.as_ref().ok_or(NetError::MissingModality(Modality::Location))?;
            feats.push(branch.forward(pairs, mode.reborrow()));
        }
        let n = feats[0].nrows();
        if feats.iter().any(|f| f.nrows() != n) {
            return Err(NetError::Shape("modalities disagree on batch size".into()));
        }
        Ok(feats)
    }

    pub fn forward(&mut self, batch: &Batch, mut mode: Mode<'_>) -> Result<Prediction, NetError> {
        let feats = self.branch_features(batch, mode.reborrow())?;
        let (fused, gate) = self.fusion.forward(&feats, mode.reborrow());
        let output = match &mut self.head {
            Head::Scalar(h) => h.forward(&fused, mode),
            Head::Aps(h) => h.forward(&fused, mode),
        };
        Ok(Prediction { output, gate })
    }

    /// Backpropagates `∂L/∂output` from the last training-mode forward pass,
    /// accumulating into parameter gradients.
    pub fn backward(&mut self, d_output: &Array2<f32>) {
        let d_fused = match &mut self.head {
            Head::Scalar(h) => h.backward(d_output),
            Head::Aps(h) => h.backward(d_output),
        };
        let mut parts = self.fusion.backward(&d_fused, self.config.feature_width).into_iter();
        if let Some(b) = self.semantic.as_mut() {
            b.backward(&parts.next().expect("semantic gradient"));
        }
        if let Some(b) = self.depth.as_mut() {
            b.backward(&parts.next().expect("depth gradient"));
        }
        if let Some(b) = self.location.as_mut() {
            b.backward(&parts.next().expect("location gradient"));
        }
    }

    /// Multiply-accumulates per sample for `h × w` image inputs.
    pub fn macs(&self, hw: (usize, usize)) -> u64 {
        let head = match &self.head {
            Head::Scalar(h) => h.macs(),
            Head::Aps(h) => h.macs(),
        };
        self.semantic.as_ref().map_or(0, |b| b.macs(hw))
            + self.depth.as_ref().map_or(0, |b| b.macs(hw))
            + self.location.as_ref().map_or(0, |b| b.macs())
            + self.fusion.macs()
            + head
    }
}

fn check_image(x: &Array4<f32>, what: &str) -> Result<(), NetError> {
    if x.dim().1 != 3 {
        return Err(NetError::Shape(format!("{what} input has {} channels, expected 3", x.dim().1)));
    }
    Ok(())
}

impl Module for ChannelPredictor {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        if let Some(b) = self.semantic.as_mut() {
            b.visit(&join(prefix, "semantic"), f);
        }
        if let Some(b) = self.depth.as_mut() {
            b.visit(&join(prefix, "depth"), f);
        }
        if let Some(b) = self.location.as_mut() {
            b.visit(&join(prefix, "location"), f);
        }
        self.fusion.visit(&join(prefix, "fusion"), f);
        match &mut self.head {
            Head::Scalar(h) => h.visit(&join(prefix, "head"), f),
            Head::Aps(h) => h.visit(&join(prefix, "head"), f),
        }
    }
}
