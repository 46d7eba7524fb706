//! Signal-level subcommands: rir, stft, istft, bands, metrics.

use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use uspeech_core::audio::{read_wav, write_wav, WavEncoding};
use uspeech_core::metrics::{aggregate, evaluate_buffers, evaluate_pair, PairMetrics, PairSpec};
use uspeech_core::rir::{decompose_rir, make_target, render_reverberant, DEFAULT_EARLY_WINDOW_MS};
use uspeech_core::sfi::{band_partition, istft as inverse, read_grid, stft as forward, write_grid, DEFAULT_BAND_WIDTH_HZ};
use uspeech_core::TargetKind;

use super::{base_dir, to_value, write_bytes};
use crate::{Context, Invalid};

#[derive(Debug, Subcommand)]
pub enum RirCommand {
    /// Split an RIR into direct path, early and late parts.
    Decompose(DecomposeArgs),
    /// Render the reverberant signal and its training targets.
    Targets(TargetsArgs),
}

#[derive(Debug, Parser)]
pub struct DecomposeArgs {
    #[arg(long)]
    rir: PathBuf,
    #[arg(long, default_value_t = DEFAULT_EARLY_WINDOW_MS)]
    window_ms: f64,
    /// Also write the decomposition record here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Parser)]
pub struct TargetsArgs {
    #[arg(long)]
    rir: PathBuf,
    #[arg(long)]
    clean: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Comma-separated target kinds.
    #[arg(long, value_delimiter = ',', default_value = "anechoic,shifted_anechoic,early_reflected:50")]
    kinds: Vec<String>,
    #[arg(long, default_value = "float32")]
    encoding: WavEncoding,
}

#[derive(Debug, Parser)]
pub struct StftArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Parser)]
pub struct IstftArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "float32")]
    encoding: WavEncoding,
}

#[derive(Debug, Parser)]
pub struct BandsArgs {
    #[arg(long)]
    fs: u32,
    #[arg(long, default_value_t = DEFAULT_BAND_WIDTH_HZ)]
    width_hz: f64,
}

#[derive(Debug, Parser)]
pub struct MetricsArgs {
    #[arg(long, alias = "ref", requires = "est", conflicts_with = "pairs")]
    reference: Option<PathBuf>,
    #[arg(long, requires = "reference")]
    est: Option<PathBuf>,
    /// JSONL of {ref_path, est_path}; paths relative to this file.
    #[arg(long)]
    pairs: Option<PathBuf>,
    /// Per-pair JSONL output for batch mode.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn rir(cmd: &RirCommand) -> Result<Value> {
    match cmd {
        RirCommand::Decompose(a) => {
            let dec = decompose_rir(&read_wav(&a.rir)?, a.window_ms)?;
            let record = to_value(&dec.record())?;
            if let Some(out) = &a.out {
                write_bytes(out, serde_json::to_string_pretty(&record)?)?;
            }
            Ok(record)
        }
        RirCommand::Targets(a) => {
            let kinds = a
                .kinds
                .iter()
                .map(|k| k.parse::<TargetKind>())
                .collect::<uspeech_core::Result<Vec<_>>>()?;
            let clean = read_wav(&a.clean)?;
            let r = read_wav(&a.rir)?;
            let dec = decompose_rir(&r, DEFAULT_EARLY_WINDOW_MS)?;
            std::fs::create_dir_all(&a.out_dir)?;
            let y = render_reverberant(&clean, &r)?;
            write_wav(&y, a.out_dir.join("reverberant.wav"), a.encoding)?;
            let mut files = vec![json!({"kind": "reverberant", "file": "reverberant.wav"})];
            for kind in kinds {
                let name = match kind {
                    TargetKind::Anechoic => "target_anechoic.wav".to_string(),
                    TargetKind::ShiftedAnechoic => "target_shifted_anechoic.wav".to_string(),
                    TargetKind::EarlyReflected { window_ms } => format!("target_early_reflected_{window_ms}ms.wav"),
                };
                write_wav(&make_target(&clean, &dec, kind)?, a.out_dir.join(&name), a.encoding)?;
                files.push(json!({"kind": kind, "file": name}));
            }
            Ok(json!({"decomposition": dec.record(), "files": files, "out_dir": a.out_dir.display().to_string()}))
        }
    }
}

pub fn stft(a: &StftArgs) -> Result<Value> {
    let grid = forward(&read_wav(&a.input)?)?;
    write_grid(&grid, &a.out)?;
    let p = grid.params();
    Ok(json!({
        "fs": p.fs, "win_len": p.win_len, "hop_len": p.hop_len,
        "frames": grid.n_frames(), "bins": p.n_bins, "original_length": grid.original_length(),
        "out": a.out.display().to_string(),
    }))
}

pub fn istft(a: &IstftArgs) -> Result<Value> {
    let buf = inverse(&read_grid(&a.input)?)?;
    let report = write_wav(&buf, &a.out, a.encoding)?;
    Ok(json!({"fs": buf.fs(), "samples": buf.len(), "clamped_samples": report.clamped, "out": a.out.display().to_string()}))
}

pub fn bands(a: &BandsArgs) -> Result<Value> {
    let p = band_partition(a.fs, a.width_hz)?;
    Ok(json!({
        "fs": p.fs, "n_bins": p.n_bins, "band_width_hz": p.band_width_hz,
        "n_bands": p.bands.len(), "bands": p.bands, "upper_edges_hz": p.upper_edges_hz(),
    }))
}

#[derive(Debug, Serialize, Deserialize)]
struct Single {
    sdr_db: f64,
    lsd_db: f64,
    mcd_db: f64,
}

fn read_pairs(path: &std::path::Path) -> Result<Vec<PairSpec>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Invalid(format!("{}:{}: {e}", path.display(), i + 1)).into()))
        .collect()
}

pub fn metrics(a: &MetricsArgs, ctx: &Context) -> Result<Value> {
    match (&a.reference, &a.est, &a.pairs) {
        (Some(r), Some(e), None) => {
            let (sdr_db, lsd_db, mcd_db) = evaluate_buffers(&read_wav(r)?, &read_wav(e)?)?;
            to_value(&Single { sdr_db, lsd_db, mcd_db })
        }
        (None, None, Some(p)) => {
            let specs = read_pairs(p)?;
            let base = base_dir(p);
            let records: Vec<PairMetrics> =
                ctx.pool()?.install(|| specs.par_iter().map(|s| evaluate_pair(s, &base)).collect::<uspeech_core::Result<_>>())?;
            if let Some(out) = &a.out {
                let mut text = String::new();
                for r in &records {
                    text.push_str(&serde_json::to_string(r)?);
                    text.push('\n');
                }
                write_bytes(out, text)?;
            }
            Ok(json!({"aggregate": aggregate(&records), "pairs": records}))
        }
        _ => Err(Invalid("give either --reference and --est, or --pairs".into()).into()),
    }
}
