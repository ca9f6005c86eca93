//! Command-line surface. `main` only parses and reports; everything else
//! lives here so tests can drive it.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use vichan_core::dataset::{build_dataset, DatasetConfig};
use vichan_net::{BackboneKind, Modality, Target};

use crate::config::TrainConfig;
use crate::data::DataContext;
use crate::error::{HarnessError, Result};
use crate::eval::evaluate_run;
use crate::experiments::{run_aps_eval, run_backbone_sweep, run_dynamic_removal, run_modality_ablation, ExperimentOptions};
use crate::report::{regenerate, ReportFormat};
use crate::train::{train_run, RunOptions, CHECKPOINT};

#[derive(Debug, Parser)]
#[command(name = "vichan", version, about = "Vision-aided channel prediction: data, training, experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset (and its masked variant under <out>/masked).
    GenData(GenDataArgs),
    /// Train one model.
    Train(RunArgs),
    /// Evaluate a trained run on a split of a dataset.
    Eval(EvalArgs),
    /// Modality ablation over the scalar targets.
    Exp1(RunArgs),
    /// Raw vs dynamic-masked inputs.
    Exp2(RunArgs),
    /// Semantic backbone sweep with complexity accounting.
    Exp3(RunArgs),
    /// Angular power spectrum evaluation.
    Exp4(RunArgs),
    /// Regenerate the report of a run or experiment directory.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Dataset configuration (TOML); missing keys take the defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Json,
    Csv,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => ReportFormat::Json,
            FormatArg::Csv => ReportFormat::Csv,
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Training configuration (TOML); missing keys take the target's defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// pl, ds, asa, asd or aps; a comma list restricts experiments.
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub test_area: Option<u32>,
    /// Comma list of semantic, depth, location.
    #[arg(long)]
    pub modalities: Option<String>,
    /// Backbone id; a comma list for the backbone sweep.
    #[arg(long)]
    pub backbone: Option<String>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: FormatArg,
    /// Write SVG figures under plots/.
    #[arg(long)]
    pub plots: bool,
    /// No per-epoch progress on standard error.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Run directory; defaults to runs/<target>.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long, value_enum, default_value = "json")]
    pub format: FormatArg,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run or experiment directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "json")]
    pub format: FormatArg,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))
}

fn targets(s: &str) -> Result<Vec<Target>> {
    s.split(',').map(|t| Ok(Target::parse(t.trim())?)).collect()
}

impl RunArgs {
    /// Config file entries, then command-line flags on top.
    fn overrides(&self) -> Result<toml::Table> {
        let mut table = match &self.config {
            Some(p) => toml::from_str(&read(p)?).map_err(|e| HarnessError::Config(format!("{}: {e}", p.display())))?,
            None => toml::Table::new(),
        };
        if let Some(s) = self.seed {
            table.insert("seed".into(), toml::Value::Integer(s as i64));
        }
        if let Some(a) = self.test_area {
            table.insert("test_area".into(), toml::Value::Integer(a as i64));
        }
        if let Some(m) = &self.modalities {
            let ids = Modality::parse_list(m)?.iter().map(|m| toml::Value::String(m.id().into())).collect();
            table.insert("modalities".into(), toml::Value::Array(ids));
        }
        if let Some(b) = self.backbone.as_deref().filter(|b| !b.contains(',')) {
            table.insert("backbone".into(), toml::Value::String(BackboneKind::parse(b)?.id().into()));
        }
        Ok(table)
    }

    fn target(&self, table: &toml::Table) -> Result<Target> {
        match (self.target.as_deref(), table.get("target").and_then(|v| v.as_str())) {
            (Some(t), _) | (None, Some(t)) => Ok(Target::parse(t)?),
            (None, None) => Ok(Target::Pl),
        }
    }

    fn run_options(&self) -> RunOptions {
        RunOptions { plots: self.plots, progress: !self.quiet }
    }

    fn experiment(&self) -> Result<ExperimentOptions> {
        let backbones = match &self.backbone {
            Some(b) => Some(b.split(',').map(|b| BackboneKind::parse(b.trim())).collect::<Result<Vec<_>, _>>()?),
            None => None,
        };
        Ok(ExperimentOptions {
            overrides: self.overrides()?,
            targets: self.target.as_deref().map(targets).transpose()?,
            backbones,
            run: self.run_options(),
            ..ExperimentOptions::default()
        })
    }

    fn out_or(&self, default: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(default))
    }
}

/// Executes one command and returns what it prints on standard output.
pub fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::GenData(a) => {
            let mut cfg = match &a.config {
                Some(p) => DatasetConfig::from_toml_str(&read(p)?)?,
                None => DatasetConfig::default(),
            };
            if let Some(s) = a.seed {
                cfg.seed = s;
            }
            let g = build_dataset(&cfg, &a.out)?;
            Ok(format!(
                "{} samples ({} dropped), manifest hash {}\n",
                g.manifest.sample_count,
                g.drops.len(),
                g.manifest.content_hash
            ))
        }
        Command::Train(a) => {
            let table = a.overrides()?;
            let target = a.target(&table)?;
            let cfg = TrainConfig::with_overrides(target, &table)?;
            let out = a.out_or(&format!("runs/{}", target.id()));
            let mut ctx = DataContext::load(&a.data)?;
            let s = train_run(&mut ctx, &cfg, &out, &a.run_options())?;
            let test = s.test.as_ref().map(|m| format!(", test rmse {} {}", m.rmse, m.unit)).unwrap_or_default();
            Ok(format!(
                "{}: {} epochs, best val loss {} at epoch {}{test}\n",
                out.display(),
                s.epochs.len(),
                s.best_val,
                s.best_epoch
            ))
        }
        Command::Eval(a) => {
            let target = a.target.as_deref().map(Target::parse).transpose()?;
            let run_dir = a.out.clone().unwrap_or_else(|| PathBuf::from(format!("runs/{}", target.unwrap_or(Target::Pl).id())));
            let ckpt = run_dir.join(CHECKPOINT);
            if !ckpt.is_file() {
                return Err(HarnessError::CheckpointNotFound(ckpt));
            }
            let mut ctx = DataContext::load(&a.data)?;
            let m = evaluate_run(&run_dir, &mut ctx, &a.split, target)?;
            Ok(match a.format {
                FormatArg::Json => serde_json::to_string_pretty(&m).expect("metrics serialise") + "\n",
                FormatArg::Csv => format!("target,unit,split,count,rmse,mae\n{},{},{},{},{},{}\n", m.target.id(), m.unit, m.split, m.count, m.rmse, m.mae),
            })
        }
        Command::Exp1(a) => experiment(&a, "runs/exp1", run_modality_ablation),
        Command::Exp2(a) => experiment(&a, "runs/exp2", run_dynamic_removal),
        Command::Exp3(a) => experiment(&a, "runs/exp3", run_backbone_sweep),
        Command::Exp4(a) => experiment(&a, "runs/exp4", run_aps_eval),
        Command::Report(a) => regenerate(&a.out, a.format.into()),
    }
}

type Runner = fn(&Path, &Path, &ExperimentOptions) -> Result<crate::report::ExperimentReport>;

fn experiment(a: &RunArgs, default_out: &str, runner: Runner) -> Result<String> {
    let out = a.out_or(default_out);
    runner(&a.data, &out, &a.experiment()?)?;
    regenerate(&out, a.format.into())
}

/// Single-line diagnostic for a failed command.
pub fn diagnostic(e: &HarnessError) -> String {
    let msg = e.to_string().replace('\n', " ");
    format!("error[{}]: {msg}", e.class())
}
