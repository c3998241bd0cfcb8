//! Command-line surface and config-file expansion.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "skcv", version, about = "Spatial k-fold cross validation toolkit")]
#[command(args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Command {
    /// Generate a synthetic spatially autocorrelated point table.
    Synth(SynthArgs),
    /// Empirical semivariogram and Moran's I correlogram.
    Diagnose(DiagnoseArgs),
    /// Dead-zone cross-validation curve over radii and densities.
    Skcv(CurveArgs),
    /// Random-leave-out control curve with the same removal counts.
    Rlo(CurveArgs),
    /// Hexagonal sampling plan for a radius or a target metric.
    Plan(PlanArgs),
    /// SKCV versus sample-generalize over ordered pairs of grid cells.
    Pairs(PairsArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Diagnose(_) => "diagnose",
            Command::Skcv(_) => "skcv",
            Command::Rlo(_) => "rlo",
            Command::Plan(_) => "plan",
            Command::Pairs(_) => "pairs",
        }
    }

    pub fn common(&self) -> &Common {
        match self {
            Command::Synth(a) => &a.common,
            Command::Diagnose(a) => &a.common,
            Command::Skcv(a) | Command::Rlo(a) => &a.common,
            Command::Plan(a) => &a.common,
            Command::Pairs(a) => &a.common,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct Common {
    /// Input point table (CSV with header).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// JSON column schema: east, north, response, features, response_kind.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
    /// key=value file or a manifest.json from an earlier run; flags given on
    /// the command line win.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskArg {
    Regression,
    Classification,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ScopeArg {
    Fold,
    Global,
}

#[derive(Debug, Args, Serialize)]
pub struct ModelArgs {
    /// Neighbours per prediction.
    #[arg(long, default_value_t = 9)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = TaskArg::Regression)]
    pub task: TaskArg,
    /// Fit standardization on each fold's training set or on all records.
    #[arg(long, value_enum, default_value_t = ScopeArg::Fold)]
    pub standardize: ScopeArg,
}

#[derive(Debug, Args, Serialize)]
pub struct CurveArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Dead-zone radii: comma list or start:stop:step (inclusive).
    #[arg(long, default_value = "0:150:10")]
    pub radii: String,
    /// Comma list of density fractions in (0, 1].
    #[arg(long, default_value = "1")]
    pub densities: String,
    /// Fold count, "loo", or a CSV of id,fold rows.
    #[arg(long, default_value = "10")]
    pub folds: String,
    /// Fail instead of skipping folds left with fewer than k training records.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKindArg {
    Exponential,
    Gaussian,
    Nugget,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseArg {
    White,
    Correlated,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 2000)]
    pub points: usize,
    #[arg(long, default_value_t = 1000.0)]
    pub width: f64,
    #[arg(long, default_value_t = 1000.0)]
    pub height: f64,
    #[arg(long, value_enum, default_value_t = ModelKindArg::Exponential)]
    pub model: ModelKindArg,
    #[arg(long, default_value_t = 1.0)]
    pub sill: f64,
    /// Range parameter in meters.
    #[arg(long, default_value_t = 50.0)]
    pub range: f64,
    #[arg(long, default_value_t = 0.0)]
    pub nugget: f64,
    #[arg(long, default_value_t = 10)]
    pub features: usize,
    /// Standard deviation of the noise added to each feature.
    #[arg(long, default_value_t = 2.0)]
    pub feature_noise: f64,
    #[arg(long, value_enum, default_value_t = NoiseArg::Correlated)]
    pub noise: NoiseArg,
    #[arg(long, value_enum, default_value_t = TaskArg::Regression)]
    pub task: TaskArg,
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub common: Common,
    /// Center of the first lag bin in meters.
    #[arg(long, default_value_t = 10.0)]
    pub lag_first: f64,
    #[arg(long, default_value_t = 10.0)]
    pub lag_step: f64,
    #[arg(long, default_value_t = 30)]
    pub lag_count: usize,
    /// Half-width of each lag bin (default: half the step).
    #[arg(long)]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct PlanArgs {
    #[command(flatten)]
    pub common: Common,
    /// Area as xmin,ymin,xmax,ymax (default: bounding box of --data).
    #[arg(long)]
    pub area: Option<String>,
    /// Covering radius in meters.
    #[arg(long, conflicts_with = "curve")]
    pub radius: Option<f64>,
    /// Curve CSV from `skcv` to invert for --target.
    #[arg(long, requires = "target")]
    pub curve: Option<PathBuf>,
    #[arg(long, requires = "curve")]
    pub target: Option<f64>,
    /// Metric stored in --curve.
    #[arg(long, value_enum, default_value_t = MetricArg::Rmse)]
    pub metric: MetricArg,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricArg {
    Rmse,
    Accuracy,
}

#[derive(Debug, Args, Serialize)]
pub struct PairsArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Area as xmin,ymin,xmax,ymax (default: bounding box of --data).
    #[arg(long)]
    pub area: Option<String>,
    /// Cells per side of the partition grid.
    #[arg(long, default_value_t = 3)]
    pub grid: usize,
    #[arg(long, default_value = "10,25,50")]
    pub radii: String,
    #[arg(long, default_value = "1")]
    pub densities: String,
    /// Fold scheme inside each cell: count or "loo".
    #[arg(long, default_value = "loo")]
    pub folds: String,
}

/// Arguments with every `--config FILE` replaced by the flags it stores.
/// File values come first, so explicit flags override them.
pub fn expand_config(argv: Vec<String>) -> Result<Vec<String>> {
    let Some(pos) = argv.iter().position(|a| a == "--config" || a.starts_with("--config=")) else {
        return Ok(argv);
    };
    let (path, consumed) = match argv[pos].strip_prefix("--config=") {
        Some(p) => (p.to_string(), 1),
        None => match argv.get(pos + 1) {
            Some(p) => (p.clone(), 2),
            None => bail!("--config needs a file path"),
        },
    };
    let command = argv.get(1).cloned().unwrap_or_default();
    let stored = read_config(Path::new(&path), &command)?;
    let mut out = Vec::with_capacity(argv.len() + stored.len());
    out.extend_from_slice(&argv[..2.min(argv.len())]);
    out.extend(stored);
    out.extend(argv[2.min(argv.len())..pos].iter().cloned());
    out.extend(argv[pos + consumed..].iter().cloned());
    Ok(out)
}

fn read_config(path: &Path, command: &str) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    if text.trim_start().starts_with('{') {
        let v: serde_json::Value =
            serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))?;
        let stored = v.get("command").and_then(|c| c.as_str()).unwrap_or_default();
        if stored != command {
            bail!("manifest {} was written by `{stored}`, not `{command}`", path.display());
        }
        let args = v.get("args").and_then(|a| a.as_array()).context("manifest has no args list")?;
        return args.iter().map(|a| a.as_str().map(str::to_string).context("manifest args must be strings")).collect();
    }
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .with_context(|| format!("{}:{}: expected key=value", path.display(), n + 1))?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        match value {
            "true" => out.push(format!("--{key}")),
            "false" => {}
            _ => out.push(format!("--{key}={value}")),
        }
    }
    Ok(out)
}

/// Argument list that reproduces this run, without `--config`.
pub fn replay_args(argv: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    let mut skip = false;
    for a in argv.iter().skip(2) {
        if std::mem::take(&mut skip) {
            continue;
        }
        if a == "--config" {
            skip = true;
        } else if !a.starts_with("--config=") {
            out.push(a.clone());
        }
    }
    out
}
