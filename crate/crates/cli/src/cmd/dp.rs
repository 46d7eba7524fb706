//! `dp identity|curve|sample-mse`.

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args as ClapArgs, Parser, Subcommand};
use serde_json::{json, Value};
use uspeech_core::audio::derive_stream;
use uspeech_core::dp::{
    curve_csv, curve_shape, dp_curve, mmse_distortion, posterior_sampling_mse, uniform_t_grid, verify_d0_identity,
};
use uspeech_core::{DiscreteDistribution, DiscreteJointModel};

use super::{read_json, to_value, write_bytes};
use crate::{Context, Invalid};

#[derive(Debug, Subcommand)]
pub enum DpCommand {
    /// Check D(0) = D* + W2_sq for a model.
    Identity(IdentityArgs),
    /// Distortion-perception curve along the transport geodesic.
    Curve(CurveArgs),
    /// Monte Carlo MSE of posterior sampling against 2 * MMSE.
    SampleMse(SampleArgs),
}

#[derive(Debug, ClapArgs)]
pub struct ModelArgs {
    /// gaussian, binary, deterministic, random, or a JSON model file.
    #[arg(long, default_value = "gaussian")]
    model: String,
    /// Grid points per axis for the gaussian model.
    #[arg(long, default_value_t = 201)]
    grid: usize,
    /// Atoms per axis for the random model.
    #[arg(long, default_value_t = 6)]
    atoms: usize,
}

#[derive(Debug, Parser)]
pub struct IdentityArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
}

#[derive(Debug, Parser)]
pub struct CurveArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Evenly spaced t values on [0, 1].
    #[arg(long, default_value_t = 21)]
    points: usize,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Parser)]
pub struct SampleArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
}

fn load_model(a: &ModelArgs, seed: u64) -> Result<DiscreteJointModel> {
    Ok(match a.model.as_str() {
        "gaussian" => DiscreteJointModel::gaussian_grid(a.grid, 5.0, 1.0, 1.0)?,
        "binary" => DiscreteJointModel::uninformative_binary(),
        "deterministic" => DiscreteJointModel::deterministic(&DiscreteDistribution::uniform(&[-1.0, 0.0, 1.0])?),
        "random" => {
            if a.atoms == 0 {
                return Err(Invalid("--atoms must be at least 1".into()).into());
            }
            DiscreteJointModel::random(&mut derive_stream(seed, "dp/random-model"), a.atoms, a.atoms)?
        }
        path => read_json(std::path::Path::new(path))?,
    })
}

pub fn run(cmd: &DpCommand, ctx: &Context) -> Result<Value> {
    match cmd {
        DpCommand::Identity(a) => {
            let model = load_model(&a.model, ctx.seed)?;
            let report = verify_d0_identity(&model, a.tol);
            let mut v = to_value(&report)?;
            v["model"] = json!(a.model.model);
            v["closed_form_gaussian_d0"] = json!(2.0 - 2f64.sqrt());
            Ok(v)
        }
        DpCommand::Curve(a) => {
            if a.points < 2 {
                return Err(Invalid("--points must be at least 2".into()).into());
            }
            let model = load_model(&a.model, ctx.seed)?;
            let points = dp_curve(&model, &uniform_t_grid(a.points))?;
            if let Some(out) = &a.csv {
                write_bytes(out, curve_csv(&points))?;
            }
            Ok(json!({"model": a.model.model, "points": points, "shape": curve_shape(&points, 1e-9)}))
        }
        DpCommand::SampleMse(a) => {
            let model = load_model(&a.model, ctx.seed)?;
            let mut stream = derive_stream(ctx.seed, "dp/sample-mse");
            let mse = posterior_sampling_mse(&model, a.samples, &mut stream)?;
            let d_star = mmse_distortion(&model);
            let ratio = if d_star > 0.0 { Some(mse / d_star) } else { None };
            Ok(json!({"model": a.model.model, "samples": a.samples, "mse": mse, "D_star": d_star, "ratio": ratio}))
        }
    }
}
