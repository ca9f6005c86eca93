//! Prediction, metrics and the predictions file.
//!
//! `predictions.csv` columns: `snapshot_id,area_id,bin,target,prediction`.
//! Scalar targets use one row per sample with `bin = 0`; the APS uses 360
//! rows per sample. Values are in physical units (dB, ns, degrees) or the
//! peak-normalised APS, written with round-trip precision.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array3;
use serde::{Deserialize, Serialize};
use vichan_core::dataset::Sample;
use vichan_core::losses::{cos_sim, LossConfig};
use vichan_core::metrics::{cosine_distribution, mae, rmse, CosineSummary};
use vichan_net::{ChannelPredictor, Mode, Target};

use vichan_core::dataset::split_by_area;
use vichan_net::Checkpoint;

use crate::config::TrainConfig;
use crate::data::{make_batch, physical_targets, DataContext};
use crate::train::CHECKPOINT;
use crate::error::{HarnessError, Result};

pub const METRICS_SCHEMA_VERSION: u32 = 1;
pub const EVAL_BATCH: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub schema_version: u32,
    pub target: Target,
    pub unit: String,
    pub split: String,
    pub count: usize,
    pub rmse: f64,
    pub mae: f64,
    /// Per-sample cosine similarity summary (APS only).
    pub cosine: Option<CosineSummary>,
}

/// One sample's physical-unit target and prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub snapshot_id: String,
    pub area_id: u32,
    pub target: Vec<f64>,
    pub prediction: Vec<f64>,
}

/// Raw head outputs (training units) for `idx`, in evaluation mode.
pub fn predict_raw(model: &mut ChannelPredictor, samples: &[Sample], idx: &[usize], cache: Option<&[Array3<f32>]>) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(idx.len());
    for chunk in idx.chunks(EVAL_BATCH) {
        let batch = make_batch(samples, chunk, &model.config, cache);
        let p = model.forward(&batch, Mode::Eval)?;
        out.extend(p.output.rows().into_iter().map(|r| r.iter().map(|&v| v as f64).collect()));
    }
    Ok(out)
}

/// Predictions de-scaled to physical units next to their targets.
pub fn predict(
    model: &mut ChannelPredictor,
    samples: &[Sample],
    idx: &[usize],
    cache: Option<&[Array3<f32>]>,
    scale: f64,
) -> Result<Vec<PredictionRow>> {
    let target = model.config.target;
    let raw = predict_raw(model, samples, idx, cache)?;
    let truth = physical_targets(samples, idx, target);
    Ok(idx
        .iter()
        .zip(raw)
        .zip(truth)
        .map(|((&i, p), t)| PredictionRow {
            snapshot_id: samples[i].snapshot_id.clone(),
            area_id: samples[i].area_id,
            target: t,
            prediction: p.into_iter().map(|v| v * scale).collect(),
        })
        .collect())
}

pub fn compute_metrics(rows: &[PredictionRow], target: Target, split: &str) -> Result<MetricsRecord> {
    let t: Vec<f64> = rows.iter().flat_map(|r| r.target.iter().copied()).collect();
    let p: Vec<f64> = rows.iter().flat_map(|r| r.prediction.iter().copied()).collect();
    let cosine = if target.is_aps() {
        let eps = LossConfig::default().epsilon;
        let c: Vec<f64> = rows.iter().map(|r| cos_sim(&r.prediction, &r.target, eps)).collect::<Result<_, _>>()?;
        Some(cosine_distribution(&c)?)
    } else {
        None
    };
    Ok(MetricsRecord {
        schema_version: METRICS_SCHEMA_VERSION,
        target,
        unit: target.unit().to_string(),
        split: split.to_string(),
        count: rows.len(),
        rmse: rmse(&t, &p)?,
        mae: mae(&t, &p)?,
        cosine,
    })
}

pub fn write_predictions(path: &Path, rows: &[PredictionRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| HarnessError::io(path, e))?;
    w.write_record(["snapshot_id", "area_id", "bin", "target", "prediction"]).map_err(|e| HarnessError::io(path, e))?;
    for r in rows {
        for (bin, (t, p)) in r.target.iter().zip(&r.prediction).enumerate() {
            w.write_record([r.snapshot_id.clone(), r.area_id.to_string(), bin.to_string(), t.to_string(), p.to_string()])
                .map_err(|e| HarnessError::io(path, e))?;
        }
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| HarnessError::io(path, e))?;
    let mut rows: Vec<PredictionRow> = Vec::new();
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| HarnessError::artifact(path, e))?;
        let field = |k: usize| rec.get(k).ok_or_else(|| HarnessError::artifact(path, "short row"));
        let num = |k: usize| field(k)?.parse::<f64>().map_err(|e| HarnessError::artifact(path, e));
        let id = field(0)?.to_string();
        let area_id = field(1)?.parse::<u32>().map_err(|e| HarnessError::artifact(path, e))?;
        let bin = field(2)?.parse::<usize>().map_err(|e| HarnessError::artifact(path, e))?;
        let k = *index.entry(id.clone()).or_insert_with(|| {
            rows.push(PredictionRow { snapshot_id: id, area_id, target: Vec::new(), prediction: Vec::new() });
            rows.len() - 1
        });
        if bin != rows[k].target.len() {
            return Err(HarnessError::artifact(path, format!("bin {bin} out of order")));
        }
        rows[k].target.push(num(3)?);
        rows[k].prediction.push(num(4)?);
    }
    Ok(rows)
}

/// Re-evaluates a stored run on `split` (`train`, `val` or `test`) of the
/// dataset in `data`. Writes `predictions-<split>.csv` and `metrics-<split>.json`.
pub fn evaluate_run(run_dir: &Path, data: &mut DataContext, split: &str, requested: Option<Target>) -> Result<MetricsRecord> {
    let ckpt = run_dir.join(CHECKPOINT);
    if !ckpt.is_file() {
        return Err(HarnessError::CheckpointNotFound(ckpt));
    }
    let ck = Checkpoint::load(&ckpt)?;
    let target = ck.header.model.target;
    if let Some(req) = requested.filter(|r| *r != target) {
        return Err(HarnessError::TargetMismatch { checkpoint: target.id().into(), requested: req.id().into() });
    }
    let cfg: TrainConfig = serde_json::from_value(ck.header.train.clone()).map_err(|e| HarnessError::artifact(&ckpt, e))?;
    let parts = split_by_area(&data.manifest, cfg.test_area, cfg.val_fraction, cfg.seed)?;
    let idx = match split {
        "train" => parts.train,
        "val" => parts.val,
        "test" => parts.test,
        other => return Err(HarnessError::Config(format!("unknown split {other:?}"))),
    };
    let mut model = ck.restore_model()?;
    let cache = data.semantic_cache(&mut model, ck.header.seed);
    let scale = target.scale(&data.manifest.label_scales);
    let rows = predict(&mut model, &data.samples, &idx, cache.as_deref().map(|v| v.as_slice()), scale)?;
    write_predictions(&run_dir.join(format!("predictions-{split}.csv")), &rows)?;
    let metrics = compute_metrics(&rows, target, split)?;
    let mpath = run_dir.join(format!("metrics-{split}.json"));
    std::fs::write(&mpath, serde_json::to_string_pretty(&metrics).expect("metrics serialise")).map_err(|e| HarnessError::io(&mpath, e))?;
    Ok(metrics)
}
