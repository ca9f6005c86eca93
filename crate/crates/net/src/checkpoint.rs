//! Checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! | bytes | content |
//! |-------|---------|
//! | 4     | magic `VCKP` |
//! | 4     | format version (u32) |
//! | 8     | header length `H` (u64) |
//! | H     | UTF-8 JSON header ([`CheckpointHeader`]) |
//! | rest  | f32 tensors back to back |
//!
//! The header lists every tensor with its name, shape and element offset
//! into the blob region. Parameter values come first (weights and buffers in
//! visit order), then optimiser first and second moments per parameter.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::model::ChannelPredictor;
use crate::optim::{Moments, OptimConfig, Optimizer};
use crate::param::Module;
use crate::NetError;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"VCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset in f32 elements from the start of the blob region.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestRecord {
    pub epoch: usize,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub model: ModelConfig,
    pub seed: u64,
    /// Free-form echo of the training configuration.
    pub train: serde_json::Value,
    pub epoch: usize,
    pub best: Option<BestRecord>,
    pub params: Vec<TensorEntry>,
    pub optimizer: Option<OptimizerHeader>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerHeader {
    pub config: OptimConfig,
    pub step: u64,
    /// `m` then `v` for each named parameter.
    pub moments: Vec<(TensorEntry, TensorEntry)>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub blob: Vec<f32>,
}

impl Checkpoint {
    pub fn capture(
        model: &mut ChannelPredictor,
        seed: u64,
        optimizer: Option<&Optimizer>,
        train: serde_json::Value,
        epoch: usize,
        best: Option<BestRecord>,
    ) -> Self {
        let mut blob = Vec::new();
        let mut params = Vec::new();
        model.visit("", &mut |name, p| {
            params.push(TensorEntry { name: name.to_string(), shape: p.value.shape().to_vec(), offset: blob.len() });
            blob.extend_from_slice(p.value_slice());
        });
        let optimizer = optimizer.map(|o| {
            let moments = o
                .state
                .iter()
                .map(|(name, mom)| {
                    let m = TensorEntry { name: name.clone(), shape: vec![mom.m.len()], offset: blob.len() };
                    blob.extend_from_slice(&mom.m);
                    let v = TensorEntry { name: name.clone(), shape: vec![mom.v.len()], offset: blob.len() };
                    blob.extend_from_slice(&mom.v);
                    (m, v)
                })
                .collect();
            OptimizerHeader { config: o.config.clone(), step: o.step, moments }
        });
        Self { header: CheckpointHeader { model: model.config.clone(), seed, train, epoch, best, params, optimizer }, blob }
    }

    fn slice(&self, e: &TensorEntry) -> Result<&[f32], NetError> {
        let len: usize = e.shape.iter().product();
        self.blob
            .get(e.offset..e.offset + len)
            .ok_or_else(|| NetError::Checkpoint(format!("tensor {} out of range", e.name)))
    }

    /// Rebuilds the model and copies every stored tensor into it.
    pub fn restore_model(&self) -> Result<ChannelPredictor, NetError> {
        let mut model = ChannelPredictor::new(self.header.model.clone(), self.header.seed)?;
        self.load_into(&mut model)?;
        Ok(model)
    }

    pub fn load_into(&self, model: &mut ChannelPredictor) -> Result<(), NetError> {
        let mut entries = self.header.params.iter();
        let mut err = None;
        model.visit("", &mut |name, p| {
            if err.is_some() {
                return;
            }
            match entries.next() {
                Some(e) if e.name == name && e.shape == p.value.shape() => match self.slice(e) {
                    Ok(src) => p.value_slice_mut().copy_from_slice(src),
                    Err(e) => err = Some(e),
                },
                Some(e) => err = Some(NetError::Checkpoint(format!("expected {name} {:?}, found {} {:?}", p.value.shape(), e.name, e.shape))),
                None => err = Some(NetError::Checkpoint(format!("missing tensor {name}"))),
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        if let Some(extra) = entries.next() {
            return Err(NetError::Checkpoint(format!("unexpected tensor {}", extra.name)));
        }
        Ok(())
    }

    pub fn restore_optimizer(&self) -> Result<Option<Optimizer>, NetError> {
        let Some(h) = &self.header.optimizer else { return Ok(None) };
        let mut opt = Optimizer::new(h.config.clone());
        opt.step = h.step;
        for (m, v) in &h.moments {
            opt.state.insert(m.name.clone(), Moments { m: self.slice(m)?.to_vec(), v: self.slice(v)?.to_vec() });
        }
        Ok(Some(opt))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, NetError> {
        let header = serde_json::to_vec(&self.header).map_err(|e| NetError::Checkpoint(e.to_string()))?;
        let mut out = Vec::with_capacity(16 + header.len() + 4 * self.blob.len());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for v in &self.blob {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NetError> {
        let bad = |m: &str| NetError::Checkpoint(m.to_string());
        if bytes.len() < 16 || &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(bad("not a checkpoint"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(NetError::Checkpoint(format!("version {version}, expected {CHECKPOINT_VERSION}")));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = bytes.get(16..16 + hlen).ok_or_else(|| bad("truncated header"))?;
        let header: CheckpointHeader = serde_json::from_slice(body).map_err(|e| NetError::Checkpoint(e.to_string()))?;
        let rest = &bytes[16 + hlen..];
        if rest.len() % 4 != 0 {
            return Err(bad("truncated tensor data"));
        }
        let blob = rest.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        Ok(Self { header, blob })
    }

    /// Writes through a temporary file so a crash never leaves a partial checkpoint.
    pub fn save(&self, path: &Path) -> Result<(), NetError> {
        let io = |e: std::io::Error| NetError::Io(format!("{}: {e}", path.display()));
        let tmp = path.with_extension("tmp");
        let mut f = std::fs::File::create(&tmp).map_err(io)?;
        f.write_all(&self.to_bytes()?).map_err(io)?;
        f.sync_all().map_err(io)?;
        std::fs::rename(&tmp, path).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, NetError> {
        let bytes = std::fs::read(path).map_err(|e| NetError::Io(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{BackboneKind, Modality, Target};
    use crate::mode::Mode;
    use crate::model::Batch;
    use crate::optim::OptimConfig;
    use ndarray::Array4;

    fn model() -> ChannelPredictor {
        let cfg = ModelConfig {
            backbone: BackboneKind::CompactConv,
            modalities: vec![Modality::Depth, Modality::Location],
            target: Target::Aps,
            ..Default::default()
        };
        ChannelPredictor::new(cfg, 11).unwrap()
    }

    #[test]
    fn round_trip_restores_outputs_and_optimizer() {
        let mut m = model();
        let mut opt = Optimizer::new(OptimConfig::adamw(1e-3, 1e-4, 1e-4));
        m.visit("", &mut |_, p| p.grad.fill(0.01));
        opt.step(&mut m, 1.0);
        let ck = Checkpoint::capture(&mut m, 11, Some(&opt), serde_json::json!({"batch": 8}), 3, Some(BestRecord { epoch: 2, val_loss: 0.5 }));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("checkpoint");
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back.header, ck.header);
        let mut m2 = back.restore_model().unwrap();
        let loc = vichan_core::geo::LatLon { lat: 31.0, lon: 121.0 };
        let batch = Batch {
            depth: Some(Array4::from_elem((1, 3, 32, 32), 0.3)),
            locations: Some(vec![(loc, loc)]),
            ..Default::default()
        };
        assert_eq!(m.forward(&batch, Mode::Eval).unwrap().output, m2.forward(&batch, Mode::Eval).unwrap().output);
        let opt2 = back.restore_optimizer().unwrap().unwrap();
        assert_eq!(opt2.step, 1);
        assert_eq!(opt2.state, opt.state);
    }

    #[test]
    fn header_layout_and_corruption() {
        let mut m = model();
        let bytes = Checkpoint::capture(&mut m, 0, None, serde_json::Value::Null, 0, None).to_bytes().unwrap();
        assert_eq!(&bytes[..4], b"VCKP");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), CHECKPOINT_VERSION);
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 2]).is_err());
        let mut wrong = bytes.clone();
        wrong[4] = 9;
        assert!(Checkpoint::from_bytes(&wrong).is_err());
    }

    #[test]
    fn mismatched_architecture_is_rejected() {
        let mut m = model();
        let ck = Checkpoint::capture(&mut m, 0, None, serde_json::Value::Null, 0, None);
        let mut other = ChannelPredictor::new(ModelConfig { target: Target::Pl, ..m.config.clone() }, 0).unwrap();
        assert!(ck.load_into(&mut other).is_err());
    }
}
