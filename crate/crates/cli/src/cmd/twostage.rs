//! `twostage regress|fit|correct|residual-corr|lipschitz`.

use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};
use serde_json::{json, Value};
use uspeech_core::audio::derive_stream;
use uspeech_core::sfi::write_grid;
use uspeech_core::twostage::{
    fit_corrector_with, lipschitz_check, mean_residual_correlation, oracle_regression, read_corrector,
    residual_correlation, spectral_normalize, transport_correct, write_corrector, Activation, DEFAULT_QUANTILES,
    REFERENCE_RESIDUAL_CORRELATION,
};
use uspeech_core::LinearLayerStack;

use super::{load_grid, read_json};
use crate::{Context, Invalid};

#[derive(Debug, Subcommand)]
pub enum TwostageCommand {
    /// Wiener-oracle regression of a noisy grid.
    Regress(RegressArgs),
    /// Fit per-bin quantile tables from clean grids.
    Fit(FitArgs),
    /// Transport-correct a regressed grid.
    Correct(CorrectArgs),
    /// Correlation of the clean and final residuals.
    ResidualCorr(ResidualArgs),
    /// Randomized Lipschitz certificate for a normalized layer stack.
    Lipschitz(LipschitzArgs),
}

#[derive(Debug, Parser)]
pub struct RegressArgs {
    /// Noisy grid (or WAV).
    #[arg(long)]
    noisy: PathBuf,
    /// JSON array of per-bin noise power.
    #[arg(long, conflicts_with = "noise")]
    noise_psd: Option<PathBuf>,
    /// Noise-only recording (grid or WAV); its mean per-bin power is used.
    #[arg(long)]
    noise: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Parser)]
pub struct FitArgs {
    /// Clean grids (or WAVs).
    #[arg(long, num_args = 1.., required = true)]
    clean: Vec<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_QUANTILES)]
    resolution: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Parser)]
pub struct CorrectArgs {
    #[arg(long)]
    regressed: PathBuf,
    #[arg(long)]
    corrector: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    correction_out: Option<PathBuf>,
}

#[derive(Debug, Parser)]
pub struct ResidualArgs {
    /// One per utterance; the three lists must have equal length.
    #[arg(long, num_args = 1.., required = true)]
    clean: Vec<PathBuf>,
    #[arg(long, num_args = 1.., required = true)]
    regressed: Vec<PathBuf>,
    #[arg(long = "final", num_args = 1.., required = true)]
    final_grids: Vec<PathBuf>,
}

#[derive(Debug, Parser)]
pub struct LipschitzArgs {
    /// Layer widths including the input, comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "16,16,16,16,16")]
    widths: Vec<usize>,
    /// Leaky slope; 1 means identity activations.
    #[arg(long, default_value_t = 0.2)]
    slope: f64,
    #[arg(long, default_value_t = 50)]
    iters: usize,
    #[arg(long, default_value_t = 1000)]
    pairs: usize,
}

pub fn run(cmd: &TwostageCommand, ctx: &Context) -> Result<Value> {
    match cmd {
        TwostageCommand::Regress(a) => {
            let noisy = load_grid(&a.noisy)?;
            let psd: Vec<f64> = match (&a.noise_psd, &a.noise) {
                (Some(p), None) => read_json(p)?,
                (None, Some(n)) => {
                    let g = load_grid(n)?;
                    (0..g.n_bins())
                        .map(|k| g.bin_magnitudes(k).iter().map(|m| m * m).sum::<f64>() / g.n_frames() as f64)
                        .collect()
                }
                _ => return Err(Invalid("give --noise-psd or --noise".into()).into()),
            };
            let out = oracle_regression(&noisy, &psd)?;
            write_grid(&out, &a.out)?;
            Ok(json!({"frames": out.n_frames(), "bins": out.n_bins(), "out": a.out.display().to_string()}))
        }
        TwostageCommand::Fit(a) => {
            let grids = a.clean.iter().map(|p| load_grid(p)).collect::<Result<Vec<_>>>()?;
            let c = fit_corrector_with(&grids, a.resolution)?;
            write_corrector(&c, &a.out)?;
            Ok(json!({
                "grids": grids.len(), "resolution": c.resolution(), "samples_per_bin": c.samples(),
                "bins": c.params().n_bins, "out": a.out.display().to_string(),
            }))
        }
        TwostageCommand::Correct(a) => {
            let regressed = load_grid(&a.regressed)?;
            let corrector = read_corrector(&a.corrector)?;
            let out = transport_correct(&regressed, &corrector)?;
            write_grid(&out.final_grid, &a.out)?;
            if let Some(p) = &a.correction_out {
                write_grid(&out.correction, p)?;
            }
            let max_corr = out.correction.data().iter().map(|c| c.norm()).fold(0.0, f64::max);
            Ok(json!({
                "frames": out.final_grid.n_frames(), "bins": out.final_grid.n_bins(),
                "residual_identity_exact": true, "max_correction_magnitude": max_corr,
                "out": a.out.display().to_string(),
            }))
        }
        TwostageCommand::ResidualCorr(a) => {
            if a.clean.len() != a.regressed.len() || a.clean.len() != a.final_grids.len() {
                return Err(Invalid("--clean, --regressed and --final need the same number of files".into()).into());
            }
            let load = |v: &[PathBuf]| v.iter().map(|p| load_grid(p)).collect::<Result<Vec<_>>>();
            let (c, r, f) = (load(&a.clean)?, load(&a.regressed)?, load(&a.final_grids)?);
            let per: Vec<f64> = (0..c.len())
                .map(|i| residual_correlation(&c[i], &r[i], &f[i]))
                .collect::<uspeech_core::Result<_>>()?;
            let mean = mean_residual_correlation((0..c.len()).map(|i| (&c[i], &r[i], &f[i])))?;
            Ok(json!({"correlation": mean, "per_utterance": per, "reference_correlation": REFERENCE_RESIDUAL_CORRELATION}))
        }
        TwostageCommand::Lipschitz(a) => {
            let activation = if a.slope == 1.0 { Activation::Identity } else { Activation::LeakyRelu { slope: a.slope } };
            let mut stream = derive_stream(ctx.seed, "twostage/lipschitz");
            let stack = spectral_normalize(&LinearLayerStack::random(&mut stream, &a.widths, activation)?, a.iters)?;
            let width = stack.input_width();
            let (mut violations, mut min_slack) = (0usize, f64::INFINITY);
            for _ in 0..a.pairs {
                let x: Vec<f64> = (0..width).map(|_| stream.normal()).collect();
                let y: Vec<f64> = (0..width).map(|_| stream.normal()).collect();
                let s = lipschitz_check(&stack, &x, &y)?.min_slack();
                min_slack = min_slack.min(s);
                violations += usize::from(s < -1e-9);
            }
            Ok(json!({
                "depth": stack.layers().len(), "pairs": a.pairs, "violations": violations,
                "min_slack": if a.pairs == 0 { None } else { Some(min_slack) },
                "lipschitz": stack.lipschitz_bound(),
                "layer_norms": stack.layers().iter().map(|l| l.norm_bound).collect::<Vec<_>>(),
            }))
        }
    }
}
