//! Command-line interface behind the `gnio` binary.
//!
//! Deliberately thin: each subcommand parses arguments, resolves a JSON
//! config (defaults, then the `--config` file, then `--set` overrides), and
//! calls into the library. Exit codes follow the usual convention:
//!
//! - 0: success
//! - 1: runtime failure (numerics, I/O while writing outputs)
//! - 2: usage or configuration error (bad flags, malformed JSON, missing
//!   inputs)
//!
//! `--seed N` is sugar for overriding the command's seed field (`seed` for
//! synth, `train.seed` for train/ablate, `oracle_seed` for fuse), so the
//! resolved config written next to the outputs always reflects the run.

mod commands;

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Axis, NoiseSpec, SegmentSpec, SynthSpec};
use crate::ekf::{EkfError, FilterConfig};
use crate::eval::EvalError;
use crate::network::{NetConfig, NetworkError};
use crate::training::{TrainConfig, TrainError};

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad usage or configuration; maps to exit code 2.
    #[error("{0}")]
    Config(String),
    /// Failure while executing an otherwise valid job; maps to exit code 1.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

pub(crate) fn config_error<E: Display>(e: E) -> CliError {
    CliError::Config(e.to_string())
}

pub(crate) fn runtime_error<E: Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}

pub(crate) fn from_train(e: TrainError) -> CliError {
    match e {
        TrainError::Config(_) => CliError::Config(e.to_string()),
        _ => CliError::Runtime(e.to_string()),
    }
}

pub(crate) fn from_net(e: NetworkError) -> CliError {
    match e {
        NetworkError::Config(_) | NetworkError::CheckpointMismatch(_) => {
            CliError::Config(e.to_string())
        }
        _ => CliError::Runtime(e.to_string()),
    }
}

pub(crate) fn from_ekf(e: EkfError) -> CliError {
    match e {
        EkfError::Config(_) | EkfError::SequenceTooShort { .. } => {
            CliError::Config(e.to_string())
        }
        _ => CliError::Runtime(e.to_string()),
    }
}

/// Evaluation errors on user-supplied inputs are config errors; only actual
/// write failures count as runtime.
pub(crate) fn from_eval(e: EvalError) -> CliError {
    match e {
        EvalError::File { .. } => CliError::Runtime(e.to_string()),
        _ => CliError::Config(e.to_string()),
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "gnio",
    version,
    about = "Gated neural inertial odometry: synthesize, train, fuse, evaluate"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic IMU sequence with ground truth
    Synth(SynthArgs),
    /// Train the displacement network on windowed sequences
    Train(TrainArgs),
    /// Dump per-window network predictions for a sequence
    Infer(InferArgs),
    /// Fuse displacement measurements with the error-state EKF
    Fuse(FuseArgs),
    /// Compare an estimated trajectory CSV against ground truth
    Eval(EvalArgs),
    /// Sweep one design axis and tabulate trajectory error per config
    Ablate(AblateArgs),
}

/// Flags shared by every subcommand.
#[derive(Args, Clone, Debug)]
pub struct CommonArgs {
    /// JSON config file; missing fields fall back to defaults
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed override (see module docs for which field it sets)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory, created if missing
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Config override with a dotted path, e.g. --set train.epochs=5
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Directory with imu.csv + gt.csv, or subdirectories of such
    #[arg(long)]
    pub data: PathBuf,
    /// Continue from checkpoint.gnio and train_log.csv already in --out
    #[arg(long)]
    pub resume: bool,
}

#[derive(Args, Debug)]
pub struct InferArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Directory with imu.csv + gt.csv, or subdirectories of such
    #[arg(long)]
    pub data: PathBuf,
    /// Network checkpoint to load
    #[arg(long)]
    pub checkpoint: PathBuf,
}

#[derive(Args, Debug)]
pub struct FuseArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Directory holding exactly one sequence
    #[arg(long)]
    pub data: PathBuf,
    /// Network checkpoint (required unless --oracle or --no-measurements)
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Use ground-truth displacements instead of the network
    #[arg(long)]
    pub oracle: bool,
    /// Disable measurements entirely: pure dead reckoning
    #[arg(long)]
    pub no_measurements: bool,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Estimated trajectory pose CSV
    #[arg(long)]
    pub est: PathBuf,
    /// Ground-truth pose CSV
    #[arg(long)]
    pub gt: PathBuf,
    /// Least-squares rigid alignment instead of first-pose
    #[arg(long)]
    pub umeyama: bool,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Directory with training sequences
    #[arg(long)]
    pub data: PathBuf,
    /// Design axis to sweep
    #[arg(long, value_enum)]
    pub axis: AblationAxis,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum AblationAxis {
    /// Six (gate, scale) activation pairs for the prediction head
    Gating,
    /// Motion bank sizes m in {16, 32, 64, 128}
    #[value(name = "bank_size")]
    BankSize,
}

impl AblationAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            AblationAxis::Gating => "gating",
            AblationAxis::BankSize => "bank_size",
        }
    }
}

/// One config schema shared by train, infer, fuse, and ablate so a single
/// file can drive the whole pipeline. Unknown keys are rejected with a
/// message naming the valid ones.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub net: NetConfig,
    pub train: TrainConfig,
    pub filter: FilterConfig,
    /// Window length fed to the network, seconds.
    pub window_duration: f64,
    /// Stride between training/inference windows, seconds.
    pub window_stride: f64,
    /// Fraction of windows held out of training for the holdout MSE.
    pub holdout_fraction: f64,
    /// Standard deviation the oracle source reports to the filter, meters.
    pub oracle_sigma: f64,
    /// Standard deviation of noise actually added to oracle displacements.
    pub oracle_noise: f64,
    /// Seed for that oracle noise.
    pub oracle_seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            net: NetConfig::tiny(),
            train: TrainConfig::default(),
            filter: FilterConfig::default(),
            window_duration: 1.0,
            window_stride: 0.5,
            holdout_fraction: 0.2,
            oracle_sigma: 1e-3,
            oracle_noise: 0.0,
            oracle_seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        self.net.validate().map_err(from_net)?;
        self.train.validate().map_err(from_train)?;
        self.filter.validate().map_err(from_ekf)?;
        for (name, v) in [
            ("window_duration", self.window_duration),
            ("window_stride", self.window_stride),
            ("oracle_sigma", self.oracle_sigma),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(CliError::Config(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(CliError::Config(format!(
                "holdout_fraction must lie in [0, 1), got {}",
                self.holdout_fraction
            )));
        }
        if !(self.oracle_noise.is_finite() && self.oracle_noise >= 0.0) {
            return Err(CliError::Config(format!(
                "oracle_noise must be nonnegative, got {}",
                self.oracle_noise
            )));
        }
        Ok(())
    }
}

/// Default synthetic spec: roughly a minute of varied desk-scale motion at
/// 200 Hz with mild sensor noise.
pub fn default_synth_spec() -> SynthSpec {
    SynthSpec {
        rate: 200,
        seed: 7,
        noise: NoiseSpec {
            sigma_g: 1e-3,
            sigma_a: 1e-2,
            bg: [0.0; 3],
            ba: [0.0; 3],
        },
        segments: vec![
            SegmentSpec::Stationary { duration: 3.0 },
            SegmentSpec::ConstVel {
                velocity: [0.6, 0.1, 0.0],
                duration: 10.0,
            },
            SegmentSpec::Stationary { duration: 2.0 },
            SegmentSpec::Sinusoid {
                axis: Axis::X,
                amplitude: 0.5,
                frequency: 0.5,
                duration: 8.0,
            },
            SegmentSpec::ArcTurn {
                radius: 2.0,
                speed: 0.8,
                duration: 10.0,
                clockwise: false,
            },
            SegmentSpec::Stationary { duration: 3.0 },
            SegmentSpec::ConstVel {
                velocity: [-0.4, 0.3, 0.0],
                duration: 8.0,
            },
            SegmentSpec::ArcTurn {
                radius: 1.5,
                speed: 0.6,
                duration: 8.0,
                clockwise: true,
            },
            SegmentSpec::Stationary { duration: 3.0 },
        ],
    }
}

/// Resolve a subcommand's config: start from `base` (or the `--config` file
/// if given), apply `--set` overrides, then parse strictly. Returns the typed
/// config plus its canonical JSON, which is what gets hashed and written next
/// to the outputs.
pub fn resolve_config<T: Serialize + DeserializeOwned>(
    base: &T,
    file: Option<&Path>,
    sets: &[String],
) -> Result<(T, String), CliError> {
    let mut value = match file {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            // serde_json's message includes the line/column of the defect.
            serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => serde_json::to_value(base).map_err(config_error)?,
    };
    for expr in sets {
        apply_override(&mut value, expr)?;
    }
    let typed: T = serde_json::from_value(value)
        .map_err(|e| CliError::Config(format!("config: {e}")))?;
    let canon = serde_json::to_string_pretty(&typed).map_err(config_error)?;
    Ok((typed, canon))
}

/// Apply one `key=value` override to a JSON config value. Keys are dotted
/// paths; values parse as JSON and fall back to a bare string, so
/// `train.epochs=5`, `net.gate_fn=sigmoid`, and `segments=[...]` all work.
/// Unknown keys survive to the typed parse, which rejects them with a list
/// of the valid fields.
fn apply_override(root: &mut serde_json::Value, expr: &str) -> Result<(), CliError> {
    let (key, raw) = expr.split_once('=').ok_or_else(|| {
        CliError::Config(format!("--set expects key=value, got `{expr}`"))
    })?;
    if key.is_empty() {
        return Err(CliError::Config(format!("--set `{expr}`: empty key")));
    }
    let value: serde_json::Value =
        serde_json::from_str(raw).unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    let (last, parents) = parts.split_last().expect("split on nonempty key");
    let mut cursor = root;
    for (depth, part) in parents.iter().enumerate() {
        let obj = cursor.as_object_mut().ok_or_else(|| {
            CliError::Config(format!(
                "--set {key}: `{}` is not a JSON object",
                parts[..=depth].join(".")
            ))
        })?;
        cursor = obj
            .entry(part.to_string())
            .or_insert_with(|| serde_json::Value::Object(Default::default()));
    }
    let obj = cursor.as_object_mut().ok_or_else(|| {
        CliError::Config(format!(
            "--set {key}: `{}` is not a JSON object",
            parents.join(".")
        ))
    })?;
    obj.insert(last.to_string(), value);
    Ok(())
}

/// Parse process arguments and execute; returns the exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help and --version surface as Err too; those exit 0.
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Execute one parsed subcommand.
pub fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Synth(args) => commands::cmd_synth(args),
        Command::Train(args) => commands::cmd_train(args),
        Command::Infer(args) => commands::cmd_infer(args),
        Command::Fuse(args) => commands::cmd_fuse(args),
        Command::Eval(args) => commands::cmd_eval(args),
        Command::Ablate(args) => commands::cmd_ablate(args),
    }
}
