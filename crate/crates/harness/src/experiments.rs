//! The four experiment protocols. Each writes `experiment.json`, one run
//! directory per arm, figures, and `report.{json,csv}`.

use std::path::Path;

use vichan_core::dataset::MASKED_CLASSES;
use vichan_core::losses::{cos_sim, LossConfig};
use vichan_net::complexity::measure_latency;
use vichan_net::{BackboneKind, Checkpoint, Modality, Target};

use crate::config::TrainConfig;
use crate::data::{make_batch, DataContext};
use crate::error::{HarnessError, Result};
use crate::eval::read_predictions;
use crate::plots;
use crate::report::{write_experiment_report, ExperimentPlan, ExperimentReport, PlannedRun, ReportFormat, LATENCY, REPORT_SCHEMA_VERSION};
use crate::train::{read_curves, train_run, RunOptions, CHECKPOINT, PREDICTIONS};

#[derive(Debug, Clone)]
pub struct ExperimentOptions {
    /// Applied on top of each target's defaults (and each experiment's test area).
    pub overrides: toml::Table,
    /// Restricts the targets (experiments 1–3).
    pub targets: Option<Vec<Target>>,
    /// Backbones for the sweep.
    pub backbones: Option<Vec<BackboneKind>>,
    pub run: RunOptions,
    /// APS overlay figures to draw.
    pub overlays: usize,
    pub latency_repetitions: usize,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        Self { overrides: toml::Table::new(), targets: None, backbones: None, run: RunOptions::default(), overlays: 4, latency_repetitions: 10 }
    }
}

impl ExperimentOptions {
    /// `target` defaults, then the experiment's test area, then user overrides.
    pub fn config(&self, target: Target, test_area: u32) -> Result<TrainConfig> {
        let mut table = toml::Table::new();
        table.insert("test_area".into(), toml::Value::Integer(test_area as i64));
        table.extend(self.overrides.clone());
        TrainConfig::with_overrides(target, &table)
    }
}

/// Modality combinations in the order of the published ablation table.
pub const ABLATION: [(&str, &[Modality]); 4] = [
    ("sem+depth+gps", &[Modality::Semantic, Modality::Depth, Modality::Location]),
    ("sem+depth", &[Modality::Semantic, Modality::Depth]),
    ("sem+gps", &[Modality::Semantic, Modality::Location]),
    ("sem", &[Modality::Semantic]),
];

pub const EXP1_TEST_AREA: u32 = 4;
pub const EXP2_TEST_AREA: u32 = 1;
pub const EXP3_TEST_AREA: u32 = 2;
pub const EXP4_TEST_AREA: u32 = 4;

fn plan(id: &str, description: &str, base: TrainConfig) -> ExperimentPlan {
    ExperimentPlan {
        schema_version: REPORT_SCHEMA_VERSION,
        experiment: id.into(),
        description: description.into(),
        base_config: base,
        runs: Vec::new(),
        artifacts: Vec::new(),
    }
}

/// Experiment 1: every modality combination for every scalar target.
pub fn run_modality_ablation(data_dir: &Path, out: &Path, opts: &ExperimentOptions) -> Result<ExperimentReport> {
    let mut ctx = DataContext::load(data_dir)?;
    let targets = opts.targets.clone().unwrap_or_else(|| Target::SCALARS.to_vec());
    if targets.iter().any(|t| t.is_aps()) {
        return Err(HarnessError::Config("the modality ablation covers scalar targets only".into()));
    }
    let mut p = plan("exp1", "Modality ablation: four modality combinations per scalar target", opts.config(targets[0], EXP1_TEST_AREA)?);
    for &target in &targets {
        for (label, mods) in ABLATION {
            let mut cfg = opts.config(target, EXP1_TEST_AREA)?;
            cfg.modalities = mods.to_vec();
            let rel = format!("{}/{label}", target.id());
            train_run(&mut ctx, &cfg, &out.join(&rel), &opts.run)?;
            p.runs.push(PlannedRun { group: target.id().into(), label: label.into(), run_dir: rel });
            p.write(out)?;
        }
    }
    Ok(write_experiment_report(out, false, ReportFormat::Json)?.0)
}

/// Checks that the masked variant pairs one-to-one with the raw dataset.
pub fn check_pairing(raw: &DataContext, masked: &DataContext) -> Result<()> {
    if !masked.manifest.masked || raw.manifest.masked {
        return Err(HarnessError::Unpaired("expected an unmasked dataset and its masked variant".into()));
    }
    let ids = |c: &DataContext| c.manifest.samples.iter().map(|e| e.id.clone()).collect::<Vec<_>>();
    if ids(raw) != ids(masked) {
        return Err(HarnessError::Unpaired("snapshot ids differ between the raw and masked datasets".into()));
    }
    Ok(())
}

/// Experiment 2: the same trimodal model trained on raw and on dynamic-masked inputs.
pub fn run_dynamic_removal(data_dir: &Path, out: &Path, opts: &ExperimentOptions) -> Result<ExperimentReport> {
    let target = opts.targets.as_ref().and_then(|t| t.first().copied()).unwrap_or(Target::Pl);
    let cfg = opts.config(target, EXP2_TEST_AREA)?;
    let masked_dir = data_dir.join("masked");
    {
        let raw = vichan_core::dataset::read_manifest(data_dir)?;
        let masked = vichan_core::dataset::read_manifest(&masked_dir)?;
        let shell = |m| DataContext::from_samples(data_dir, m, Vec::new());
        check_pairing(&shell(raw), &shell(masked))?;
    }
    let mut p = plan(
        "exp2",
        &format!("Dynamic scatterer removal: raw vs masked ({} classes masked)", MASKED_CLASSES.len()),
        cfg.clone(),
    );
    for (label, dir) in [("raw", data_dir.to_path_buf()), ("masked", masked_dir)] {
        let mut ctx = DataContext::load(&dir)?;
        train_run(&mut ctx, &cfg, &out.join(label), &opts.run)?;
        p.runs.push(PlannedRun { group: target.id().into(), label: label.into(), run_dir: label.into() });
        p.write(out)?;
    }
    let raw = read_curves(&out.join("raw"))?;
    let masked = read_curves(&out.join("masked"))?;
    let mut w = csv::Writer::from_path(out.join("curves.csv")).map_err(|e| HarnessError::io(out, e))?;
    w.write_record(["variant", "epoch", "train_loss", "val_loss"]).map_err(|e| HarnessError::io(out, e))?;
    for (label, recs) in [("raw", &raw), ("masked", &masked)] {
        for r in recs {
            w.write_record([label.to_string(), r.epoch.to_string(), r.train_loss.to_string(), r.val_loss.to_string()])
                .map_err(|e| HarnessError::io(out, e))?;
        }
    }
    w.flush().map_err(|e| HarnessError::io(out, e))?;
    plots::curves_plot(&out.join("plots/training_curves.svg"), &[("raw", &raw), ("masked", &masked)])?;
    p.artifacts = vec!["curves.csv".into(), "plots/training_curves.svg".into()];
    p.write(out)?;
    Ok(write_experiment_report(out, false, ReportFormat::Json)?.0)
}

/// Experiment 3: one trimodal model per semantic backbone, with complexity.
pub fn run_backbone_sweep(data_dir: &Path, out: &Path, opts: &ExperimentOptions) -> Result<ExperimentReport> {
    let mut ctx = DataContext::load(data_dir)?;
    let target = opts.targets.as_ref().and_then(|t| t.first().copied()).unwrap_or(Target::Pl);
    let backbones = opts.backbones.clone().unwrap_or_else(|| BackboneKind::ALL.to_vec());
    let mut p = plan("exp3", "Semantic backbone sweep with parameter, FLOP and latency accounting", opts.config(target, EXP3_TEST_AREA)?);
    for kind in backbones {
        let mut cfg = opts.config(target, EXP3_TEST_AREA)?;
        cfg.backbone = kind;
        let rel = kind.id().to_string();
        let run_dir = out.join(&rel);
        let summary = train_run(&mut ctx, &cfg, &run_dir, &opts.run)?;
        // Latency on raw images: caching is a training convenience, not part of inference.
        let mut model = Checkpoint::load(&run_dir.join(CHECKPOINT))?.restore_model()?;
        let test = vichan_core::dataset::split_by_area(&ctx.manifest, cfg.test_area, cfg.val_fraction, cfg.seed)?.test;
        let idx: Vec<usize> = test.into_iter().take(cfg.batch_size).collect();
        let batch = make_batch(&ctx.samples, &idx, &model.config, None);
        let latency = measure_latency(&mut model, &batch, opts.latency_repetitions.max(1), 5)?;
        let lp = run_dir.join(LATENCY);
        std::fs::write(&lp, serde_json::to_string_pretty(&latency).expect("latency serialises")).map_err(|e| HarnessError::io(&lp, e))?;
        let _ = summary;
        p.runs.push(PlannedRun { group: target.id().into(), label: kind.id().into(), run_dir: rel });
        p.write(out)?;
        ctx.clear_cache();
    }
    Ok(write_experiment_report(out, true, ReportFormat::Json)?.0)
}

/// Experiment 4: the APS model, its cosine distribution and sample overlays.
pub fn run_aps_eval(data_dir: &Path, out: &Path, opts: &ExperimentOptions) -> Result<ExperimentReport> {
    let mut ctx = DataContext::load(data_dir)?;
    let cfg = opts.config(Target::Aps, EXP4_TEST_AREA)?;
    let mut p = plan("exp4", "Angular power spectrum prediction", cfg.clone());
    train_run(&mut ctx, &cfg, &out.join("aps"), &opts.run)?;
    p.runs.push(PlannedRun { group: "aps".into(), label: "sem+depth+gps".into(), run_dir: "aps".into() });
    let rows = read_predictions(&out.join("aps").join(PREDICTIONS))?;
    let eps = LossConfig::default().epsilon;
    let cos: Vec<f64> = rows.iter().map(|r| cos_sim(&r.prediction, &r.target, eps)).collect::<Result<_, _>>()?;
    let summary = vichan_core::metrics::cosine_distribution(&cos)?;
    plots::cosine_histogram(&out.join("plots/cosine_histogram.svg"), &summary)?;
    p.artifacts.push("plots/cosine_histogram.svg".into());
    let n = opts.overlays.min(rows.len());
    for k in 0..n {
        // Evenly spaced through the test set.
        let i = k * rows.len() / n;
        let rel = format!("plots/overlay_{:02}_{}.svg", k, rows[i].snapshot_id);
        plots::aps_overlay(&out.join(&rel), &rows[i], cos[i])?;
        p.artifacts.push(rel);
    }
    p.write(out)?;
    Ok(write_experiment_report(out, false, ReportFormat::Json)?.0)
}
