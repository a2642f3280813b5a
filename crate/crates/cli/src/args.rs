use std::net::IpAddr;
use std::path::PathBuf;

use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "kw", version, about = "Snore detection: training, on-device simulation and a session service")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a balanced synthetic corpus with a manifest.
    Synth(SynthArgs),
    /// Train a classifier from a manifest.
    Train(TrainArgs),
    /// Score a trained model against a labeled manifest.
    Eval(EvalArgs),
    /// Run the device loop over a recording and write the per-window trace.
    Infer(InferArgs),
    /// Run a recording through device, link and gateway into a server.
    Simulate(SimulateArgs),
    /// Run the session ingest and analytics service.
    Serve(ServeArgs),
    /// Resend spooled events the server has not acknowledged.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerArg {
    Sgd,
    Momentum,
    Adam,
}

impl From<OptimizerArg> for kw_core::nn::Optimizer {
    fn from(o: OptimizerArg) -> Self {
        match o {
            OptimizerArg::Sgd => Self::Sgd,
            OptimizerArg::Momentum => Self::Momentum,
            OptimizerArg::Adam => Self::Adam,
        }
    }
}

fn parse_side(s: &str) -> Result<usize, String> {
    match s {
        "24" => Ok(24),
        "64" => Ok(64),
        _ => Err(format!("`{s}` is not a supported input side (24 or 64)")),
    }
}

fn parse_rate(s: &str) -> Result<f64, String> {
    let r: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if (0.0..1.0).contains(&r) {
        Ok(r)
    } else {
        Err(format!("{r} outside [0, 1)"))
    }
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub per_class: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 16_000)]
    pub sample_rate: u32,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Feature image side.
    #[arg(long, value_parser = parse_side, default_value = "24")]
    pub side: usize,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Weights file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch metrics; defaults to `<out>.history.csv`.
    #[arg(long)]
    pub history: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OptimizerArg::Momentum)]
    pub optimizer: OptimizerArg,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub validation_fraction: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// JSON report; printed to stdout when omitted.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct InferArgs {
    #[arg(long)]
    pub wav: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Trace CSV; written to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub wav: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, alias = "server-url", env = "KW_SERVER_URL")]
    pub server: String,
    #[arg(long, env = "KW_TOKEN", hide_env_values = true)]
    #[serde(skip)]
    pub token: Option<String>,
    /// Link drop probability per transmission attempt.
    #[arg(long, value_parser = parse_rate, default_value_t = 0.0)]
    pub loss: f64,
    #[arg(long, value_parser = parse_rate, default_value_t = 0.0)]
    pub dup: f64,
    #[arg(long, value_parser = parse_rate, default_value_t = 0.0)]
    pub corrupt: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "kw-sim")]
    pub device_id: String,
    /// Session start; defaults to now.
    #[arg(long)]
    pub started_at: Option<DateTime<Utc>>,
    #[arg(long, default_value_t = kw_gateway::DEFAULT_BATCH_SIZE)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1000)]
    pub backoff_base_ms: u64,
    #[arg(long, default_value_t = 60_000)]
    pub backoff_cap_ms: u64,
    #[arg(long, default_value_t = 16)]
    pub max_attempts: u32,
    /// Environment sampling period.
    #[arg(long, default_value_t = 60_000)]
    pub env_period_ms: u64,
    /// Keep unacknowledged events here for `kw replay`.
    #[arg(long)]
    pub spool_dir: Option<PathBuf>,
    /// JSON report; printed to stdout either way.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ServeArgs {
    /// 0 picks a free port.
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: IpAddr,
    #[arg(long)]
    pub data_dir: PathBuf,
    #[arg(long, env = "KW_TOKEN", hide_env_values = true)]
    #[serde(skip)]
    pub token: Option<String>,
    /// Answer this fraction of API requests with 503.
    #[arg(long = "fault-503", value_parser = parse_rate, default_value_t = 0.0)]
    pub fault_503: f64,
    #[arg(long, default_value_t = 0)]
    pub fault_seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct ReplayArgs {
    #[arg(long)]
    pub spool_dir: PathBuf,
    #[arg(long, alias = "server-url", env = "KW_SERVER_URL")]
    pub server: String,
    #[arg(long, env = "KW_TOKEN", hide_env_values = true)]
    #[serde(skip)]
    pub token: Option<String>,
    #[arg(long, default_value_t = kw_gateway::DEFAULT_BATCH_SIZE)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1000)]
    pub backoff_base_ms: u64,
    #[arg(long, default_value_t = 16)]
    pub max_attempts: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}
