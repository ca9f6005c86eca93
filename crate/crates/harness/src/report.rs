//! Run and experiment reports, rebuilt purely from stored artifacts.
//!
//! A run report reads `config.echo`, `curves.csv` and `predictions.csv`.
//! An experiment report reads `experiment.json` plus each listed run
//! directory (and its `latency.json` when present). Regenerating either
//! from the same directory reproduces it byte for byte.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use vichan_net::{count_params, estimate_flops, LatencyReport, Target};

use crate::config::TrainConfig;
use crate::error::{HarnessError, Result};
use crate::eval::{compute_metrics, read_predictions, MetricsRecord};
use crate::train::{read_curves, ConfigEcho, PREDICTIONS};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const EXPERIMENT_PLAN: &str = "experiment.json";
pub const LATENCY: &str = "latency.json";
pub const INPUT_HW: (usize, usize) = (224, 224);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub target: Target,
    pub seed: u64,
    pub backbone: String,
    pub modalities: Vec<String>,
    pub manifest_hash: String,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub test: Option<MetricsRecord>,
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

pub fn run_report(run_dir: &Path) -> Result<RunReport> {
    let echo = ConfigEcho::read(run_dir)?;
    let curves = read_curves(run_dir)?;
    let best = curves.iter().filter(|r| r.improved).last();
    let preds = run_dir.join(PREDICTIONS);
    let test = if preds.exists() { Some(compute_metrics(&read_predictions(&preds)?, echo.train.target, "test")?) } else { None };
    Ok(RunReport {
        schema_version: REPORT_SCHEMA_VERSION,
        target: echo.train.target,
        seed: echo.train.seed,
        backbone: echo.train.backbone.id().to_string(),
        modalities: echo.train.modalities.iter().map(|m| m.id().to_string()).collect(),
        manifest_hash: echo.manifest_hash,
        epochs_run: curves.len(),
        best_epoch: best.map_or(0, |r| r.epoch),
        best_val_loss: best.map_or(f64::NAN, |r| r.val_loss),
        test,
    })
}

pub fn write_run_report(run_dir: &Path) -> Result<RunReport> {
    let r = run_report(run_dir)?;
    write(&run_dir.join("report.json"), &serde_json::to_string_pretty(&r).expect("report serialises"))?;
    let mut csv = String::from("target,unit,count,rmse,mae,cos_mean,cos_median,epochs_run,best_epoch,best_val_loss\n");
    let (unit, count, rmse, mae, cm, cmed) = match &r.test {
        Some(m) => {
            let c = m.cosine.as_ref();
            (m.unit.clone(), m.count.to_string(), m.rmse.to_string(), m.mae.to_string(), opt(c.map(|c| c.mean)), opt(c.map(|c| c.median)))
        }
        None => (r.target.unit().to_string(), String::new(), String::new(), String::new(), String::new(), String::new()),
    };
    csv.push_str(&format!("{},{unit},{count},{rmse},{mae},{cm},{cmed},{},{},{}\n", r.target.id(), r.epochs_run, r.best_epoch, r.best_val_loss));
    write(&run_dir.join("report.csv"), &csv)?;
    Ok(r)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One arm of an experiment; `run_dir` is relative to the experiment directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedRun {
    pub group: String,
    pub label: String,
    pub run_dir: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub schema_version: u32,
    pub experiment: String,
    pub description: String,
    pub base_config: TrainConfig,
    pub runs: Vec<PlannedRun>,
    /// Plot and curve files relative to the experiment directory.
    pub artifacts: Vec<String>,
}

impl ExperimentPlan {
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        write(&dir.join(EXPERIMENT_PLAN), &serde_json::to_string_pretty(self).expect("plan serialises"))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(EXPERIMENT_PLAN);
        let text = std::fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| HarnessError::artifact(&path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityRow {
    pub params_total: usize,
    pub params_trainable: usize,
    pub flops: u64,
    pub latency: Option<LatencyReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub group: String,
    pub label: String,
    pub run_dir: String,
    pub metrics: MetricsRecord,
    pub complexity: Option<ComplexityRow>,
    /// Metrics on which this row is best within its group.
    pub best: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub experiment: String,
    pub description: String,
    pub config: TrainConfig,
    pub rows: Vec<ReportRow>,
    pub artifacts: Vec<String>,
}

pub fn experiment_report(dir: &Path, with_complexity: bool) -> Result<ExperimentReport> {
    let plan = ExperimentPlan::read(dir)?;
    let mut rows = Vec::with_capacity(plan.runs.len());
    for run in &plan.runs {
        let run_dir = dir.join(&run.run_dir);
        let echo = ConfigEcho::read(&run_dir)?;
        let metrics = compute_metrics(&read_predictions(&run_dir.join(PREDICTIONS))?, echo.train.target, "test")?;
        let complexity = if with_complexity {
            let (params_total, params_trainable) = count_params(&echo.model)?;
            let lat_path = run_dir.join(LATENCY);
            let latency = if lat_path.exists() {
                let text = std::fs::read_to_string(&lat_path).map_err(|e| HarnessError::io(&lat_path, e))?;
                Some(serde_json::from_str(&text).map_err(|e| HarnessError::artifact(&lat_path, e))?)
            } else {
                None
            };
            Some(ComplexityRow { params_total, params_trainable, flops: estimate_flops(&echo.model, INPUT_HW)?, latency })
        } else {
            None
        };
        rows.push(ReportRow { group: run.group.clone(), label: run.label.clone(), run_dir: run.run_dir.clone(), metrics, complexity, best: Vec::new() });
    }
    mark_best(&mut rows);
    Ok(ExperimentReport {
        schema_version: REPORT_SCHEMA_VERSION,
        experiment: plan.experiment,
        description: plan.description,
        config: plan.base_config,
        rows,
        artifacts: plan.artifacts,
    })
}

/// Lowest RMSE and MAE, highest mean cosine, per group. Ties mark every tied row.
pub fn mark_best(rows: &mut [ReportRow]) {
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        groups.entry(r.group.clone()).or_default().push(i);
    }
    type Key = fn(&MetricsRecord) -> Option<f64>;
    let keys: [(&str, Key); 3] = [
        ("rmse", |m| Some(m.rmse)),
        ("mae", |m| Some(m.mae)),
        ("cos_mean", |m| m.cosine.as_ref().map(|c| -c.mean)),
    ];
    for members in groups.values() {
        for (name, key) in keys {
            let best = members.iter().filter_map(|&i| key(&rows[i].metrics)).fold(f64::INFINITY, f64::min);
            for &i in members {
                if key(&rows[i].metrics) == Some(best) {
                    rows[i].best.push(name.to_string());
                }
            }
        }
    }
}

pub fn experiment_csv(r: &ExperimentReport) -> String {
    let mut out = String::from(
        "group,label,target,unit,count,rmse,mae,cos_mean,cos_median,cos_std,cos_min,cos_max,params_total,params_trainable,flops,latency_ms,samples_per_s,hardware,best,run_dir\n",
    );
    for row in &r.rows {
        let m = &row.metrics;
        let c = m.cosine.as_ref();
        let cx = row.complexity.as_ref();
        let lat = cx.and_then(|c| c.latency.as_ref());
        let fields = [
            row.group.clone(),
            row.label.clone(),
            m.target.id().to_string(),
            m.unit.clone(),
            m.count.to_string(),
            m.rmse.to_string(),
            m.mae.to_string(),
            opt(c.map(|c| c.mean)),
            opt(c.map(|c| c.median)),
            opt(c.map(|c| c.std)),
            opt(c.map(|c| c.min)),
            opt(c.map(|c| c.max)),
            cx.map(|c| c.params_total.to_string()).unwrap_or_default(),
            cx.map(|c| c.params_trainable.to_string()).unwrap_or_default(),
            cx.map(|c| c.flops.to_string()).unwrap_or_default(),
            opt(lat.map(|l| l.mean_ms)),
            opt(lat.map(|l| l.samples_per_s)),
            lat.map(|l| format!("\"{}\"", l.hardware.replace('"', "'"))).unwrap_or_default(),
            row.best.join(";"),
            row.run_dir.clone(),
        ];
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// Rebuilds and writes `report.json` and `report.csv`; returns the text in `format`.
pub fn write_experiment_report(dir: &Path, with_complexity: bool, format: ReportFormat) -> Result<(ExperimentReport, String)> {
    let r = experiment_report(dir, with_complexity)?;
    let json = serde_json::to_string_pretty(&r).expect("report serialises");
    let csv = experiment_csv(&r);
    write(&dir.join("report.json"), &json)?;
    write(&dir.join("report.csv"), &csv)?;
    let text = match format {
        ReportFormat::Json => json,
        ReportFormat::Csv => csv,
    };
    Ok((r, text))
}

/// Regenerates whatever report lives in `dir`: an experiment if it has a
/// plan, otherwise a single run.
pub fn regenerate(dir: &Path, format: ReportFormat) -> Result<String> {
    if dir.join(EXPERIMENT_PLAN).exists() {
        let plan = ExperimentPlan::read(dir)?;
        let with_complexity = plan.experiment == "exp3";
        Ok(write_experiment_report(dir, with_complexity, format)?.1)
    } else {
        write_run_report(dir)?;
        let name = match format {
            ReportFormat::Json => "report.json",
            ReportFormat::Csv => "report.csv",
        };
        let path = dir.join(name);
        std::fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))
    }
}
