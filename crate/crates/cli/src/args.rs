//! Command-line arguments. Every option is optional at parse time so that a
//! JSON config file can supply it; flags given on the command line win.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "efcp",
    version,
    about = "Elastic functional conformal prediction bands"
)]
pub struct Cli {
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = "EFCP_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw synthetic curves.
    Simulate(SimulateArgs),
    /// Prediction band for the unobserved part of one curve.
    Predict(PredictArgs),
    /// Monte Carlo coverage and length of a procedure.
    Evaluate(EvaluateArgs),
    /// Karcher-mean template and multiple registration.
    Register(RegisterArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Predict(_) => "predict",
            Command::Evaluate(_) => "evaluate",
            Command::Register(_) => "register",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PopulationArg {
    Homogeneous,
    Heterogeneous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProcArg {
    Ffcp,
    Sfcp,
    Sfcpp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricArg {
    L2,
    Fr,
    Amplitude,
    Euclid,
    ProdL2,
    ProdFr,
    ProdAmplitude,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TuneArg {
    Local,
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelArg {
    Gaussian,
    Triangular,
}

/// Synthetic population settings.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorArgs {
    #[arg(long, value_enum)]
    pub population: Option<PopulationArg>,
    /// Compose each curve with a random Beta-CDF warp.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub phase: Option<bool>,
    #[arg(long)]
    pub noise_sd: Option<f64>,
    /// Number of curves.
    #[arg(long)]
    pub n: Option<usize>,
    /// Grid size.
    #[arg(long = "T")]
    #[serde(rename = "T")]
    pub t_len: Option<usize>,
    /// Center of the second bump of two-peak curves.
    #[arg(long)]
    pub second_center: Option<f64>,
    /// Share of two-peak curves in the heterogeneous population.
    #[arg(long)]
    pub two_peak_share: Option<f64>,
}

/// Observation pattern of the new curve. Times are on the `[0, 1]` axis.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct PatternArgs {
    /// Observed on `[0, u]`.
    #[arg(long)]
    pub u: Option<f64>,
    /// Observed on `[a, b]`, written `a:b`.
    #[arg(long)]
    pub interval: Option<String>,
    /// Observed fragments, written `a:b,c:d`.
    #[arg(long)]
    pub fragments: Option<String>,
    /// Fragment weights, comma separated (default equal).
    #[arg(long)]
    pub fragment_weights: Option<String>,
    /// Sparse observation times, comma separated.
    #[arg(long)]
    pub sparse: Option<String>,
    /// Random truncation `[0, U]` with `U ~ U(lo, hi)`, written `lo:hi`
    /// (evaluate only).
    #[arg(long)]
    pub u_range: Option<String>,
}

/// Conformal and registration settings shared by predict and evaluate.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct ConformalArgs {
    #[arg(long = "proc", value_enum)]
    #[serde(rename = "proc")]
    pub procedure: Option<ProcArg>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Training-split size of the split procedures.
    #[arg(long)]
    pub n_train: Option<usize>,
    /// Predictor distance; adapted to fragment and sparse patterns.
    #[arg(long, value_enum)]
    pub metric: Option<MetricArg>,
    #[arg(long, value_enum)]
    pub tune: Option<TuneArg>,
    #[arg(long, value_enum)]
    pub kernel: Option<KernelArg>,
    /// Fixed bandwidth; disables tuning.
    #[arg(long)]
    pub bandwidth: Option<f64>,
    /// Trial values per time point.
    #[arg(long)]
    pub n_trial: Option<usize>,
    /// Relative expansion of the trial range.
    #[arg(long)]
    pub expansion: Option<f64>,
    /// Coarse grid size of the warp prediction set.
    #[arg(long = "coarse-T")]
    #[serde(rename = "coarse_T")]
    pub coarse_t: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub karcher: KarcherArgs,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct KarcherArgs {
    /// Karcher iteration cap.
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Relative objective decrease that stops the Karcher iteration.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Largest DP step; moves `(a, b)` with `1 <= a, b <= max_step`.
    #[arg(long)]
    pub max_step: Option<usize>,
    /// Re-center the template after each Karcher update.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub recenter: Option<bool>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub generator: GeneratorArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    #[serde(skip)]
    pub io: IoArgs,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictArgs {
    /// Curves CSV.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// CSV with the partially observed curve (missing cells empty or NaN).
    #[arg(long)]
    pub new: Option<PathBuf>,
    /// Hold out this curve of the input as the new one; its truth is written.
    #[arg(long)]
    pub target: Option<String>,
    /// Scale every curve to unit L2 norm.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub normalize: Option<bool>,
    /// Seed of the training/calibration shuffle.
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub pattern: PatternArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub conformal: ConformalArgs,
    #[command(flatten)]
    #[serde(skip)]
    pub io: IoArgs,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluateArgs {
    /// Monte Carlo replicates.
    #[arg(long = "B")]
    #[serde(rename = "B")]
    pub b: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub generator: GeneratorArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub pattern: PatternArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub conformal: ConformalArgs,
    #[command(flatten)]
    #[serde(skip)]
    pub io: IoArgs,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct RegisterArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub normalize: Option<bool>,
    #[command(flatten)]
    #[serde(flatten)]
    pub karcher: KarcherArgs,
    #[command(flatten)]
    #[serde(skip)]
    pub io: IoArgs,
}

/// Options that never enter the config snapshot.
#[derive(Debug, Clone, Default, Args)]
pub struct IoArgs {
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON config (or a previous run's manifest); flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl IoArgs {
    pub fn out_dir(&self) -> CliResult<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| CliError::Usage("--out is required".into()))
    }
}

fn non_null(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m.into_iter().filter(|(_, v)| !v.is_null()).collect(),
        _ => Map::new(),
    }
}

/// Loads the config object of `path`; a run manifest contributes its
/// `config` member and must come from the same command.
pub fn load_config(path: &Path, command: &str) -> CliResult<Map<String, Value>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let Value::Object(mut obj) = value else {
        return Err(CliError::Usage(format!(
            "{}: config must be a JSON object",
            path.display()
        )));
    };
    if let (Some(Value::String(cmd)), Some(Value::Object(cfg))) =
        (obj.get("command"), obj.get("config"))
    {
        if cmd != command {
            return Err(CliError::Usage(format!(
                "{}: manifest of `{cmd}` cannot configure `{command}`",
                path.display()
            )));
        }
        obj = cfg.clone();
    }
    Ok(non_null(Value::Object(obj)))
}

/// Overlays the flags given on the command line onto `file`.
pub fn merge<T: Serialize + DeserializeOwned>(cli: &T, file: Map<String, Value>) -> CliResult<T> {
    let flags = non_null(serde_json::to_value(cli).map_err(|e| CliError::Usage(e.to_string()))?);
    let mut merged = file.clone();
    merged.extend(flags);
    let out: T = serde_json::from_value(Value::Object(merged))
        .map_err(|e| CliError::Usage(format!("config: {e}")))?;
    // every field serializes, unset ones as null
    let known = match serde_json::to_value(&out) {
        Ok(Value::Object(m)) => m,
        _ => Map::new(),
    };
    if let Some(key) = file.keys().find(|k| !known.contains_key(*k)) {
        return Err(CliError::Usage(format!("config: unknown key `{key}`")));
    }
    Ok(out)
}
