//! Seeded training loop with early stopping, scheduling and checkpointing.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{Array2, Array3};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use vichan_core::dataset::{split_by_area, Sample, Split};
use vichan_core::losses::{composite_aps_grad, composite_aps_loss, mse_grad, mse_loss, ApsBatch, LossConfig};
use vichan_core::scene::rng::{stream_rng, Stream};
use vichan_net::checkpoint::BestRecord;
use vichan_net::{clip_grad_norm, Checkpoint, ChannelPredictor, Mode, Module, ModelConfig, Optimizer, Target};

use crate::config::TrainConfig;
use crate::data::{make_batch, physical_targets, DataContext};
use crate::error::{HarnessError, Result};
use crate::eval::{compute_metrics, predict, write_predictions, MetricsRecord};
use crate::schedule::{EarlyStopping, LrSchedule};

pub const CONFIG_ECHO: &str = "config.echo";
pub const TRAIN_LOG: &str = "train.log";
pub const CURVES: &str = "curves.csv";
pub const CHECKPOINT: &str = "checkpoint";
pub const PREDICTIONS: &str = "predictions.csv";
pub const PLOTS: &str = "plots";
pub const ECHO_SCHEMA_VERSION: u32 = 1;

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub schema_version: u32,
    pub train: TrainConfig,
    pub model: ModelConfig,
    pub data_dir: String,
    pub manifest_hash: String,
    pub overrides: Vec<String>,
    pub split_sizes: [usize; 3],
}

impl ConfigEcho {
    pub fn read(run_dir: &Path) -> Result<Self> {
        let path = run_dir.join(CONFIG_ECHO);
        let text = std::fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| HarnessError::artifact(&path, e))
    }
}

/// One row of `curves.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// Validation loss, or the training loss when there is no validation split.
    pub val_loss: f64,
    pub lr_scale: f64,
    /// Largest global gradient norm before and after clipping.
    pub grad_norm_max: f64,
    pub clipped_norm_max: f64,
    pub improved: bool,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub run_dir: PathBuf,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val: f64,
    pub stopped_early: bool,
    pub test: Option<MetricsRecord>,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub plots: bool,
    /// One progress line per epoch on standard error.
    pub progress: bool,
}

/// Called after every epoch with the live model; returning `true` stops training.
pub type EpochHook<'a> = &'a mut dyn FnMut(&mut ChannelPredictor, &EpochRecord) -> Result<bool>;

/// Training units: physical value divided by the manifest scale (the APS is already normalised).
pub fn scaled_targets(samples: &[Sample], idx: &[usize], target: Target, scale: f64) -> Vec<f64> {
    physical_targets(samples, idx, target).into_iter().flatten().map(|v| v / scale).collect()
}

/// Loss on one batch and its gradient with respect to the head output.
pub struct BatchLoss {
    pub total: f64,
    /// `name=value` pairs for the log.
    pub parts: Vec<(&'static str, f64)>,
    pub grad: Array2<f32>,
}

pub fn batch_loss(target: Target, loss: &LossConfig, t: &[f64], out: &Array2<f32>, with_grad: bool) -> Result<BatchLoss> {
    let p: Vec<f64> = out.iter().map(|&v| v as f64).collect();
    if target.is_aps() {
        let batch = ApsBatch::new(t, &p, out.ncols())?;
        let (b, g) = if with_grad { composite_aps_grad(&batch, loss) } else { (composite_aps_loss(&batch, loss), Vec::new()) };
        let parts = vec![("shape", b.shape), ("wmse", b.wmse), ("wl1", b.wl1), ("rtp", b.rtp)];
        Ok(BatchLoss { total: b.total, parts, grad: to_grad(out, g) })
    } else {
        let total = mse_loss(t, &p)?;
        let g = if with_grad { mse_grad(t, &p)? } else { Vec::new() };
        Ok(BatchLoss { total, parts: vec![("mse", total)], grad: to_grad(out, g) })
    }
}

fn to_grad(out: &Array2<f32>, g: Vec<f64>) -> Array2<f32> {
    if g.is_empty() {
        return Array2::zeros((0, 0));
    }
    Array2::from_shape_vec(out.raw_dim(), g.into_iter().map(|v| v as f32).collect()).expect("gradient matches output")
}

/// Mean loss over `idx` in evaluation mode, weighted by batch size.
pub fn mean_loss(
    model: &mut ChannelPredictor,
    samples: &[Sample],
    idx: &[usize],
    cache: Option<&[Array3<f32>]>,
    loss: &LossConfig,
    scale: f64,
    batch_size: usize,
) -> Result<f64> {
    let target = model.config.target;
    let mut sum = 0.0;
    for chunk in idx.chunks(batch_size) {
        let batch = make_batch(samples, chunk, &model.config, cache);
        let out = model.forward(&batch, Mode::Eval)?.output;
        let t = scaled_targets(samples, chunk, target, scale);
        sum += batch_loss(target, loss, &t, &out, false)?.total * chunk.len() as f64;
    }
    Ok(sum / idx.len() as f64)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| HarnessError::io(path, e))?))
}

/// Splits by area per the configuration, trains, and evaluates the best
/// checkpoint on the held-out area.
pub fn train_run(ctx: &mut DataContext, cfg: &TrainConfig, out: &Path, opts: &RunOptions) -> Result<RunSummary> {
    let split = split_by_area(&ctx.manifest, cfg.test_area, cfg.val_fraction, cfg.seed)?;
    train_with_split(ctx, cfg, &split, out, opts, None)
}

pub fn train_with_split(
    ctx: &mut DataContext,
    cfg: &TrainConfig,
    split: &Split,
    out: &Path,
    opts: &RunOptions,
    mut hook: Option<EpochHook>,
) -> Result<RunSummary> {
    cfg.validate()?;
    if split.train.is_empty() {
        return Err(HarnessError::Config("training split is empty".into()));
    }
    std::fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
    let target = cfg.target;
    let scale = target.scale(&ctx.manifest.label_scales);
    let model_cfg = cfg.model_config(ctx.location_stats(&split.train));
    let mut model = ChannelPredictor::new(model_cfg.clone(), cfg.seed)?;
    let mut opt = Optimizer::new(cfg.optim_config());

    let echo = ConfigEcho {
        schema_version: ECHO_SCHEMA_VERSION,
        train: cfg.clone(),
        model: model_cfg,
        data_dir: ctx.dir.display().to_string(),
        manifest_hash: ctx.manifest.content_hash.clone(),
        overrides: cfg.overrides(),
        split_sizes: [split.train.len(), split.val.len(), split.test.len()],
    };
    let echo_path = out.join(CONFIG_ECHO);
    std::fs::write(&echo_path, serde_json::to_string_pretty(&echo).expect("echo serialises")).map_err(|e| HarnessError::io(&echo_path, e))?;

    let log_path = out.join(TRAIN_LOG);
    let mut log = create(&log_path)?;
    let logio = |e: std::io::Error| HarnessError::io(&log_path, e);
    writeln!(log, "target={} seed={} manifest={}", target.id(), cfg.seed, ctx.manifest.content_hash).map_err(logio)?;
    for o in &echo.overrides {
        writeln!(log, "override {o}").map_err(logio)?;
    }
    let curves_path = out.join(CURVES);
    let mut curves = csv::Writer::from_path(&curves_path).map_err(|e| HarnessError::io(&curves_path, e))?;

    let cache = ctx.semantic_cache(&mut model, cfg.seed);
    let cache = cache.as_deref().map(|v| v.as_slice());
    let samples = &ctx.samples;
    let ckpt_path = out.join(CHECKPOINT);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut schedule = LrSchedule::new(cfg.scheduler);
    let mut epochs = Vec::new();
    let mut stopped_early = false;
    let mut order = split.train.clone();

    for epoch in 1..=cfg.max_epochs {
        let start = Instant::now();
        let lr_scale = schedule.scale(epoch);
        order.copy_from_slice(&split.train);
        order.shuffle(&mut stream_rng(cfg.seed, Stream::Shuffle, epoch as u64));
        let mut dropout_rng = stream_rng(cfg.seed, Stream::Dropout, epoch as u64);
        let (mut sum, mut grad_max, mut clipped_max) = (0.0, 0.0f64, 0.0f64);
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch = make_batch(samples, chunk, &model.config, cache);
            model.zero_grad();
            let out = model.forward(&batch, Mode::Train(&mut dropout_rng))?.output;
            let t = scaled_targets(samples, chunk, target, scale);
            let l = batch_loss(target, &cfg.loss, &t, &out, true)?;
            if !l.total.is_finite() || l.grad.iter().any(|g| !g.is_finite()) {
                let detail = l.parts.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" ");
                writeln!(log, "epoch={epoch} step={step} aborted: non-finite loss {detail}").map_err(logio)?;
                log.flush().map_err(logio)?;
                return Err(HarnessError::NonFinite { epoch, step, detail });
            }
            model.backward(&l.grad);
            let (pre, post) = clip_grad_norm(&mut model, cfg.clip_norm);
            opt.step(&mut model, lr_scale);
            sum += l.total * chunk.len() as f64;
            grad_max = grad_max.max(pre);
            clipped_max = clipped_max.max(post);
            let parts: String = l.parts.iter().map(|(k, v)| format!(" {k}={v:.6e}")).collect();
            writeln!(log, "epoch={epoch} step={step} loss={:.6e}{parts} grad_norm={pre:.4e} clipped_norm={post:.4e} lr_scale={lr_scale:.6}", l.total)
                .map_err(logio)?;
        }
        let train_loss = sum / order.len() as f64;
        let val_loss = if split.val.is_empty() {
            train_loss
        } else {
            mean_loss(&mut model, samples, &split.val, cache, &cfg.loss, scale, cfg.batch_size)?
        };
        if !val_loss.is_finite() {
            return Err(HarnessError::NonFinite { epoch, step: 0, detail: format!("validation loss {val_loss}") });
        }
        let decision = stopper.update(epoch, val_loss);
        if schedule.observe(val_loss) {
            writeln!(log, "epoch={epoch} plateau: learning-rate scale now {}", schedule.scale(epoch + 1)).map_err(logio)?;
        }
        if decision.improved {
            let best = BestRecord { epoch, val_loss };
            let train_echo = serde_json::to_value(cfg).expect("config serialises");
            Checkpoint::capture(&mut model, cfg.seed, Some(&opt), train_echo, epoch, Some(best)).save(&ckpt_path)?;
        }
        let rec = EpochRecord {
            epoch,
            train_loss,
            val_loss,
            lr_scale,
            grad_norm_max: grad_max,
            clipped_norm_max: clipped_max,
            improved: decision.improved,
            seconds: start.elapsed().as_secs_f64(),
        };
        curves.serialize(&rec).map_err(|e| HarnessError::io(&curves_path, e))?;
        curves.flush().map_err(|e| HarnessError::io(&curves_path, e))?;
        log.flush().map_err(logio)?;
        if opts.progress {
            eprintln!(
                "[{}] epoch {epoch:>3}: train {train_loss:.5} val {val_loss:.5}{} ({:.1}s)",
                out.display(),
                if decision.improved { " *" } else { "" },
                rec.seconds
            );
        }
        let hook_stop = match hook.as_mut() {
            Some(h) => h(&mut model, &rec)?,
            None => false,
        };
        epochs.push(rec);
        if hook_stop {
            writeln!(log, "epoch={epoch} stopped by caller").map_err(logio)?;
            break;
        }
        if decision.stop {
            writeln!(log, "epoch={epoch} early stop: {} epochs without improvement", cfg.patience).map_err(logio)?;
            stopped_early = true;
            break;
        }
    }
    log.flush().map_err(logio)?;

    let mut best = Checkpoint::load(&ckpt_path)?.restore_model()?;
    let test = if split.test.is_empty() {
        None
    } else {
        let rows = predict(&mut best, samples, &split.test, cache, scale)?;
        write_predictions(&out.join(PREDICTIONS), &rows)?;
        Some(compute_metrics(&rows, target, "test")?)
    };
    crate::report::write_run_report(out)?;
    if opts.plots {
        crate::plots::curves_plot(&out.join(PLOTS).join("curves.svg"), &[("run", &epochs)])?;
    }
    Ok(RunSummary {
        run_dir: out.to_path_buf(),
        best_epoch: stopper.best_epoch,
        best_val: stopper.best.unwrap_or(f64::NAN),
        stopped_early,
        epochs,
        test,
    })
}

pub fn read_curves(run_dir: &Path) -> Result<Vec<EpochRecord>> {
    let path = run_dir.join(CURVES);
    let mut r = csv::Reader::from_path(&path).map_err(|e| HarnessError::io(&path, e))?;
    r.deserialize().map(|rec| rec.map_err(|e| HarnessError::artifact(&path, e))).collect()
}
