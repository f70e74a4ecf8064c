use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};
use interdiff::{LossKind, SamplerKind};

mod commands;
mod config;

use config::Config;

/// Denoising with a linear-interpolation diffusion model.
#[derive(Parser, Debug)]
#[command(name = "interdiff", version)]
struct Cli {
    /// key = value file supplying defaults for any long flag
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic clean/noisy PNG dataset
    GenData(GenDataArgs),
    /// Train a denoiser on a clean/noisy dataset
    Train(TrainArgs),
    /// Denoise one image with a trained model
    Denoise(DenoiseArgs),
    /// PSNR / SSIM of image pairs
    Eval(EvalArgs),
    /// Monte Carlo comparison of the samplers under injected errors
    Simulate(SimulateArgs),
    /// Train and evaluate one model per horizon
    #[command(name = "sweep-T")]
    SweepT(SweepArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenData(_) => "gen-data",
            Command::Train(_) => "train",
            Command::Denoise(_) => "denoise",
            Command::Eval(_) => "eval",
            Command::Simulate(_) => "simulate",
            Command::SweepT(_) => "sweep-T",
        }
    }
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long = "noise-a")]
    noise_a: Option<f64>,
    #[arg(long = "noise-b")]
    noise_b: Option<f64>,
    /// Square image side in pixels
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

/// Options shared by `train` and `sweep-T`.
#[derive(Args, Debug)]
pub struct FitArgs {
    /// Dataset directory with `<id>_clean.png` / `<id>_noisy.png`
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    /// Training patch side in pixels
    #[arg(long)]
    patch: Option<usize>,
    /// Patch extraction stride; defaults to the patch size
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long)]
    loss: Option<LossKind>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    beta1: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
    #[arg(long = "adam-eps")]
    adam_eps: Option<f64>,
    #[arg(long = "charbonnier-eps")]
    charbonnier_eps: Option<f64>,
    /// Leave the last K pairs (by id) out of training
    #[arg(long)]
    holdout: Option<usize>,
    #[arg(long = "base-channels")]
    base_channels: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long = "time-embed-dim")]
    time_embed_dim: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    fit: FitArgs,
    #[arg(long = "T")]
    horizon: Option<usize>,
    #[arg(long = "out-model")]
    out_model: Option<PathBuf>,
    /// Loss log CSV; defaults to the model path with a `.loss.csv` extension
    #[arg(long)]
    log: Option<PathBuf>,
    /// Also write the checkpoint every N iterations
    #[arg(long = "checkpoint-every")]
    checkpoint_every: Option<usize>,
}

#[derive(Args, Debug)]
pub struct DenoiseArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    sampler: Option<SamplerKind>,
    /// Number of sampling steps; defaults to the horizon the model was trained with
    #[arg(long = "T")]
    horizon: Option<usize>,
    /// Write every intermediate state as `step_XXXX.png`
    #[arg(long = "trace-dir")]
    trace_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Directory holding `<id>_<reference>.png` and `<id>_<suffix>.png`
    #[arg(long)]
    pairs: Option<PathBuf>,
    #[arg(long)]
    suffix: Option<String>,
    #[arg(long)]
    reference: Option<String>,
    /// Explicit `reference.png,test.png` pair; repeatable
    #[arg(long = "pair", value_name = "REF,TEST")]
    pair: Vec<String>,
    /// CSV destination; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long = "T")]
    horizon: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    bias: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    /// Pixels per side of the simulated image
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    fit: FitArgs,
    /// Comma-separated horizons
    #[arg(long = "T-list")]
    t_list: Option<String>,
    #[arg(long)]
    sampler: Option<SamplerKind>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

impl From<interdiff::Error> for CliError {
    fn from(e: interdiff::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

pub fn missing(flag: &str) -> CliError {
    CliError::Usage(format!("missing required option --{flag}"))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let conf = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    match cli.command {
        Command::GenData(a) => commands::gen_data(&a, &conf),
        Command::Train(a) => commands::train(&a, &conf),
        Command::Denoise(a) => commands::denoise(&a, &conf),
        Command::Eval(a) => commands::eval(&a, &conf),
        Command::Simulate(a) => commands::simulate(&a, &conf),
        Command::SweepT(a) => commands::sweep(&a, &conf),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let name = cli.command.name();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            let mut cmd = Cli::command();
            cmd.build();
            let usage = cmd.find_subcommand_mut(name).map(|c| c.render_usage().to_string()).unwrap_or_default();
            eprintln!("error: {msg}\n\n{usage}\n\nFor more information, try '--help'.");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
