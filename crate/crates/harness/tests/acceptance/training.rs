//! Criteria that train models on generated data.

use std::path::Path;
use std::time::Instant;

use vichan_core::dataset::{build_dataset, AreaSpec, DatasetConfig, Split};
use vichan_core::losses::{cos_sim, LossConfig};
use vichan_core::metrics::rmse;
use vichan_harness::data::DataContext;
use vichan_harness::eval::predict;
use vichan_harness::train::{train_with_split, RunOptions};
use vichan_harness::TrainConfig;
use vichan_net::{BackboneKind, ChannelPredictor, Target};

use crate::Verdict;

/// Wall-clock budget for each overfit run.
const OVERFIT_BUDGET_S: f64 = 300.0;
const OVERFIT_MAX_EPOCHS: usize = 200;
const OVERFIT_SAMPLES: usize = 64;

fn dataset(dir: &Path, seed: u64, areas: &[(u32, f64, usize)]) -> DataContext {
    let cfg = DatasetConfig {
        seed,
        areas: areas.iter().map(|&(id, tx_height_m, n)| AreaSpec { id, tx_height_m, snapshots: Some(n) }).collect(),
        ..DatasetConfig::default()
    };
    build_dataset(&cfg, dir).expect("dataset generation");
    DataContext::load(dir).expect("dataset load")
}

/// Trains on every sample with no held-out data until `metric` on the
/// training set crosses `goal` or the epoch budget runs out. Returns the
/// last metric, the epoch the goal was met (0 if never) and the wall time.
fn overfit(ctx: &mut DataContext, cfg: &TrainConfig, out: &Path, goal: impl Fn(f64) -> bool, metric: fn(&[vichan_harness::eval::PredictionRow]) -> f64) -> (f64, usize, f64) {
    let all: Vec<usize> = (0..ctx.samples.len()).collect();
    let split = Split { train: all.clone(), val: Vec::new(), test: Vec::new() };
    let samples = ctx.samples.clone();
    let scale = cfg.target.scale(&ctx.manifest.label_scales);
    // The cache is keyed by backbone and seed, so this probe shares the run's.
    let mut probe = ChannelPredictor::new(cfg.model_config(ctx.location_stats(&all)), cfg.seed).unwrap();
    let cache = ctx.semantic_cache(&mut probe, cfg.seed);
    let start = Instant::now();
    let (mut best, mut reached) = (None::<f64>, 0);
    let mut hook = |model: &mut ChannelPredictor, rec: &vichan_harness::train::EpochRecord| {
        let rows = predict(model, &samples, &all, cache.as_deref().map(|c| c.as_slice()), scale)?;
        let m = metric(&rows);
        best = Some(m);
        if goal(m) {
            reached = rec.epoch;
            return Ok(true);
        }
        Ok(false)
    };
    let summary = train_with_split(ctx, cfg, &split, out, &RunOptions::default(), Some(&mut hook)).expect("training");
    let elapsed = start.elapsed().as_secs_f64();
    let _ = summary;
    (best.unwrap_or(f64::NAN), reached, elapsed)
}

fn scalar_rmse(rows: &[vichan_harness::eval::PredictionRow]) -> f64 {
    let y: Vec<f64> = rows.iter().map(|r| r.target[0]).collect();
    let p: Vec<f64> = rows.iter().map(|r| r.prediction[0]).collect();
    rmse(&y, &p).unwrap()
}

fn cosine_mean(rows: &[vichan_harness::eval::PredictionRow]) -> f64 {
    let eps = LossConfig::default().epsilon;
    rows.iter().map(|r| cos_sim(&r.prediction, &r.target, eps).unwrap()).sum::<f64>() / rows.len() as f64
}

pub fn overfit_sanity() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let half = OVERFIT_SAMPLES / 2;
    let mut ctx = dataset(&tmp.path().join("data"), 11, &[(1, 33.0, half), (4, 3.0, half)]);
    assert_eq!(ctx.samples.len(), OVERFIT_SAMPLES, "generator dropped samples");

    let mut pl = TrainConfig::for_target(Target::Pl);
    pl.backbone = BackboneKind::CompactConv;
    pl.max_epochs = OVERFIT_MAX_EPOCHS;
    let (pl_rmse, pl_epoch, pl_s) = overfit(&mut ctx, &pl, &tmp.path().join("pl"), |m| m < 1.0, scalar_rmse);

    let mut aps = TrainConfig::for_target(Target::Aps);
    aps.backbone = BackboneKind::CompactConv;
    aps.max_epochs = OVERFIT_MAX_EPOCHS;
    let (aps_cos, aps_epoch, aps_s) = overfit(&mut ctx, &aps, &tmp.path().join("aps"), |m| m > 0.95, cosine_mean);

    let pl_ok = pl_rmse < 1.0 && pl_s < OVERFIT_BUDGET_S;
    let aps_ok = aps_cos > 0.95 && aps_s < OVERFIT_BUDGET_S;
    Verdict::new(
        pl_ok && aps_ok,
        format!(
            "PL train RMSE {pl_rmse:.3} dB at epoch {pl_epoch} in {pl_s:.0}s; APS train cosine mean {aps_cos:.4} at epoch {aps_epoch} in {aps_s:.0}s"
        ),
    )
}

/// Epoch budget for each ablation arm. The ordering shows up early, and the
/// full published schedule would take hours per arm on one core.
const ABLATION_MAX_EPOCHS: usize = 12;
const ABLATION_SEEDS: [u64; 3] = [0, 1, 2];

fn ablation_overrides(seed: u64) -> toml::Table {
    let mut t = toml::Table::new();
    t.insert("seed".into(), toml::Value::Integer(seed as i64));
    t.insert("backbone".into(), toml::Value::String("compact-conv".into()));
    t.insert("max_epochs".into(), toml::Value::Integer(ABLATION_MAX_EPOCHS as i64));
    t
}

pub fn directional_ablation() -> Verdict {
    use vichan_harness::experiments::{run_aps_eval, run_modality_ablation, ExperimentOptions, ABLATION};

    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let ctx = dataset(&data, 2024, &[(1, 33.0, 267), (2, 34.0, 267), (3, 34.0, 266), (4, 3.0, 200)]);
    let held_out = ctx.manifest.area_counts[&4];
    assert_eq!((ctx.samples.len() - held_out, held_out), (800, 200), "generator dropped samples");
    drop(ctx);

    let progress = std::env::var_os("VICHAN_PROGRESS").is_some();
    let mut holds = 0;
    let mut total = 0usize;
    let mut table = Vec::new();
    for seed in ABLATION_SEEDS {
        let opts = ExperimentOptions {
            overrides: ablation_overrides(seed),
            targets: Some(vec![Target::Pl]),
            run: RunOptions { plots: false, progress },
            ..ExperimentOptions::default()
        };
        let report = run_modality_ablation(&data, &tmp.path().join(format!("exp1-{seed}")), &opts).expect("ablation");
        let rmse_of = |label: &str| report.rows.iter().find(|r| r.label == label).map(|r| r.metrics.rmse).expect("ablation arm");
        let [tri, sd, sg, sem] = ABLATION.map(|(label, _)| rmse_of(label));
        for (lo, hi) in [(tri, sd), (tri, sg), (sd, sem), (sg, sem)] {
            total += 1;
            holds += usize::from(lo <= hi);
        }
        table.push(format!("seed {seed}: {tri:.2}/{sd:.2}/{sg:.2}/{sem:.2}"));
    }

    let mut overrides = ablation_overrides(0);
    overrides.insert("max_epochs".into(), toml::Value::Integer(APS_MAX_EPOCHS as i64));
    let opts = ExperimentOptions { overrides, run: RunOptions { plots: false, progress }, overlays: 0, ..ExperimentOptions::default() };
    let aps = run_aps_eval(&data, &tmp.path().join("exp4"), &opts).expect("aps run");
    let cos = aps.rows[0].metrics.cosine.as_ref().expect("cosine summary").mean;

    // The stated quota is 4 of 6; the listed relations give 4 per seed, so
    // the same two-thirds share is required of all of them.
    let need = (2 * total).div_ceil(3);
    Verdict::new(
        holds >= need && cos >= 0.85,
        format!("ordering holds in {holds}/{total} comparisons (need {need}); PL RMSE tri/sd/sg/sem {}; APS test cosine mean {cos:.4}", table.join(", ")),
    )
}

const APS_MAX_EPOCHS: usize = 12;
