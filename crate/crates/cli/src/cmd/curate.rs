//! `curate score|filter|hist`.

use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde_json::{json, Value};
use uspeech_core::curate::{
    filter_with_bins, histogram_csv, histograms_by_source, ingest_manifest, write_manifest, ProxyScorer, QualityScorer,
    ScoreLine, SidecarScores, DEFAULT_HIST_BINS,
};

use super::{base_dir, required, to_value, write_bytes};
use crate::Context;

#[derive(Debug, Subcommand)]
pub enum CurateCommand {
    /// Score every manifest item with the proxy scorer.
    Score(ScoreArgs),
    /// Keep items whose score is at least tau.
    Filter(FilterArgs),
    /// Per-source score histograms.
    Hist(HistArgs),
}

#[derive(Debug, Parser)]
pub struct ScoreArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Output JSONL of {id, score}.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Parser)]
pub struct FilterArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    scores: Option<PathBuf>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    bins: Option<usize>,
    /// Write the kept entries as a manifest.
    #[arg(long)]
    out_manifest: Option<PathBuf>,
    /// Write the full JSON report.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write the histogram table as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Parser)]
pub struct HistArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    scores: Option<PathBuf>,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

pub fn run(cmd: &CurateCommand, ctx: &Context) -> Result<Value> {
    let cfg = &ctx.config.curate;
    match cmd {
        CurateCommand::Score(a) => {
            let manifest = required(&a.manifest, &cfg.manifest, "--manifest")?;
            let entries = ingest_manifest(&manifest)?;
            let base = base_dir(&manifest);
            let scorer = ProxyScorer;
            let lines: Vec<ScoreLine> = ctx.pool()?.install(|| {
                entries
                    .par_iter()
                    .map(|e| Ok(ScoreLine { id: e.id.clone(), score: scorer.score_entry(e, &base)? }))
                    .collect::<uspeech_core::Result<_>>()
            })?;
            SidecarScores::write(&lines, &a.out)?;
            let mean = lines.iter().map(|l| l.score).sum::<f64>() / lines.len().max(1) as f64;
            Ok(json!({"scorer": scorer.name(), "entries": lines.len(), "mean_score": mean, "out": a.out.display().to_string()}))
        }
        CurateCommand::Filter(a) => {
            let manifest = required(&a.manifest, &cfg.manifest, "--manifest")?;
            let scores_path = required(&a.scores, &cfg.scores, "--scores")?;
            let tau = required(&a.tau, &cfg.tau, "--tau")?;
            let bins = a.bins.or(cfg.bins).unwrap_or(DEFAULT_HIST_BINS);
            let entries = ingest_manifest(&manifest)?;
            let scores = SidecarScores::read(&scores_path)?.align(&entries)?;
            let report = filter_with_bins(&entries, &scores, tau, bins)?;
            if let Some(out) = &a.out_manifest {
                let kept: Vec<_> = entries.iter().zip(&scores).filter(|(_, &s)| s >= tau).map(|(e, _)| e).collect();
                write_manifest(kept, out)?;
            }
            if let Some(out) = &a.report {
                write_bytes(out, serde_json::to_string_pretty(&report)?)?;
            }
            if let Some(out) = &a.csv {
                write_bytes(out, histogram_csv(&report.per_source))?;
            }
            to_value(&report)
        }
        CurateCommand::Hist(a) => {
            let manifest = required(&a.manifest, &cfg.manifest, "--manifest")?;
            let scores_path = required(&a.scores, &cfg.scores, "--scores")?;
            let bins = a.bins.or(cfg.bins).unwrap_or(DEFAULT_HIST_BINS);
            let entries = ingest_manifest(&manifest)?;
            let scores = SidecarScores::read(&scores_path)?.align(&entries)?;
            let per_source = histograms_by_source(&entries, &scores, bins)?;
            if let Some(out) = &a.csv {
                write_bytes(out, histogram_csv(&per_source))?;
            }
            Ok(json!({"bins": bins, "per_source": per_source}))
        }
    }
}
