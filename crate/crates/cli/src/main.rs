//! `uspeech`: batch front end for the uspeech toolkit.
//!
//! Every run prints one JSON summary on stdout. Progress goes to stderr.
//! Exit codes: 0 success, 1 validation error, 2 I/O error.

mod cmd;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;

use config::PipelineConfig;

/// A user-facing validation failure (exit code 1).
#[derive(Debug)]
pub struct Invalid(pub String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

#[derive(Debug, Parser)]
#[command(name = "uspeech", version, about = "Speech enhancement data engineering and verification toolkit")]
struct Cli {
    /// Root seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// File-level parallelism.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// TOML pipeline configuration; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Degrade every manifest item with a recipe, writing paired WAVs.
    Simulate(cmd::simulate::Args),
    /// Room impulse response tools.
    #[command(subcommand)]
    Rir(cmd::signal::RirCommand),
    /// WAV to spectrogram grid.
    Stft(cmd::signal::StftArgs),
    /// Spectrogram grid to WAV.
    Istft(cmd::signal::IstftArgs),
    /// Sub-band partition for a sampling rate.
    Bands(cmd::signal::BandsArgs),
    /// Quality scoring and filtering of manifests.
    #[command(subcommand)]
    Curate(cmd::curate::CurateCommand),
    /// Distortion-perception oracles.
    #[command(subcommand)]
    Dp(cmd::dp::DpCommand),
    /// Regression plus transport-correction lab.
    #[command(subcommand)]
    Twostage(cmd::twostage::TwostageCommand),
    /// SDR, LSD and MCD for one pair or a JSONL batch.
    Metrics(cmd::signal::MetricsArgs),
}

impl Command {
    fn name(&self) -> String {
        use cmd::curate::CurateCommand as C;
        use cmd::dp::DpCommand as D;
        use cmd::signal::RirCommand as R;
        use cmd::twostage::TwostageCommand as T;
        match self {
            Command::Simulate(_) => "simulate",
            Command::Rir(R::Decompose(_)) => "rir decompose",
            Command::Rir(R::Targets(_)) => "rir targets",
            Command::Stft(_) => "stft",
            Command::Istft(_) => "istft",
            Command::Bands(_) => "bands",
            Command::Curate(C::Score(_)) => "curate score",
            Command::Curate(C::Filter(_)) => "curate filter",
            Command::Curate(C::Hist(_)) => "curate hist",
            Command::Dp(D::Identity(_)) => "dp identity",
            Command::Dp(D::Curve(_)) => "dp curve",
            Command::Dp(D::SampleMse(_)) => "dp sample-mse",
            Command::Twostage(T::Regress(_)) => "twostage regress",
            Command::Twostage(T::Fit(_)) => "twostage fit",
            Command::Twostage(T::Correct(_)) => "twostage correct",
            Command::Twostage(T::ResidualCorr(_)) => "twostage residual-corr",
            Command::Twostage(T::Lipschitz(_)) => "twostage lipschitz",
            Command::Metrics(_) => "metrics",
        }
        .to_string()
    }
}

/// Settings shared by every subcommand.
pub struct Context {
    pub seed: u64,
    pub workers: usize,
    pub config: PipelineConfig,
}

impl Context {
    /// Runs `f` on a pool of `workers` threads.
    pub fn pool(&self) -> Result<rayon::ThreadPool> {
        Ok(rayon::ThreadPoolBuilder::new().num_threads(self.workers).build()?)
    }
}

#[derive(Serialize)]
struct Summary<'a> {
    command: &'a str,
    ok: bool,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    result: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    exit_code: Option<u8>,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Invalid>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<uspeech_core::Error>() {
            return if e.is_io() { 2 } else { 1 };
        }
        if cause.is::<std::io::Error>() {
            return 2;
        }
    }
    1
}

fn context(cli: &Cli) -> Result<Context> {
    let config = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    let workers = cli.workers.or(config.workers).unwrap_or(1);
    if workers == 0 {
        return Err(Invalid("--workers must be at least 1".into()).into());
    }
    Ok(Context { seed: cli.seed.or(config.root_seed).unwrap_or(0), workers, config })
}

fn dispatch(command: &Command, ctx: &Context) -> Result<Value> {
    match command {
        Command::Simulate(a) => cmd::simulate::run(a, ctx),
        Command::Rir(c) => cmd::signal::rir(c),
        Command::Stft(a) => cmd::signal::stft(a),
        Command::Istft(a) => cmd::signal::istft(a),
        Command::Bands(a) => cmd::signal::bands(a),
        Command::Curate(c) => cmd::curate::run(c, ctx),
        Command::Dp(c) => cmd::dp::run(c, ctx),
        Command::Twostage(c) => cmd::twostage::run(c, ctx),
        Command::Metrics(a) => cmd::signal::metrics(a, ctx),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let name = cli.command.name();
    let outcome = context(&cli).and_then(|ctx| dispatch(&cli.command, &ctx).map(|v| (v, ctx.seed)));
    let (summary, code) = match outcome {
        Ok((result, seed)) => (
            Summary { command: &name, ok: true, seed, result: Some(result), error: None, exit_code: None },
            0,
        ),
        Err(err) => {
            let code = exit_code(&err);
            eprintln!("error: {err:#}");
            let seed = cli.seed.unwrap_or(0);
            (
                Summary { command: &name, ok: false, seed, result: None, error: Some(format!("{err:#}")), exit_code: Some(code) },
                code,
            )
        }
    };
    println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
    ExitCode::from(code)
}
