//! `simulate`: manifest plus recipe template to degraded pairs.

use std::path::{Path, PathBuf};

use anyhow::{Context as _, Result};
use clap::Parser;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use uspeech_core::audio::{read_wav, write_wav, WavEncoding};
use uspeech_core::curate::{ingest_manifest, ManifestEntry};
use uspeech_core::degrade::{apply_recipe, AssetBank, PairMetadata, Step};
use uspeech_core::{DegradationRecipe, TargetKind};

use super::{base_dir, required, sha256_hex, to_value, write_bytes};
use crate::{Context, Invalid};

#[derive(Debug, Parser)]
pub struct Args {
    /// JSONL manifest of clean utterances.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// JSON recipe template: {"steps": [...]}, applied to every item.
    #[arg(long)]
    recipe: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    noise_dir: Option<PathBuf>,
    #[arg(long)]
    rir_dir: Option<PathBuf>,
    /// Resample assets whose rate differs from the utterance.
    #[arg(long)]
    resample_assets: bool,
    /// Target kind for every reverb step, e.g. "shifted_anechoic" or "early_reflected:50".
    #[arg(long)]
    target: Option<String>,
    /// pcm16, pcm24 or float32.
    #[arg(long)]
    encoding: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecipeTemplate {
    steps: Vec<Step>,
}

#[derive(Debug, Serialize)]
struct ItemRecord {
    #[serde(flatten)]
    metadata: PairMetadata,
    input_file: String,
    target_file: String,
    clamped_samples: usize,
}

#[derive(Debug, Serialize)]
struct SimulateSummary {
    items: usize,
    out_dir: String,
    metadata: String,
    encoding: String,
    clamped_samples: usize,
    /// SHA-256 over every written file, in manifest order.
    digest: String,
}

fn check_id(id: &str) -> Result<()> {
    let bad = id.is_empty() || id.contains(['/', '\\']) || id == "." || id == "..";
    if bad {
        return Err(Invalid(format!("item id {id:?} cannot be used as a file name")).into());
    }
    Ok(())
}

fn process(
    entry: &ManifestEntry,
    steps: &[Step],
    bank: &AssetBank,
    seed: u64,
    audio_base: &Path,
    out_dir: &Path,
    encoding: WavEncoding,
) -> Result<(ItemRecord, String)> {
    let clean = read_wav(audio_base.join(&entry.path))?;
    let recipe = DegradationRecipe::new(entry.id.clone(), steps.to_vec());
    let pair = apply_recipe(&clean, &recipe, bank, seed).with_context(|| format!("item {}", entry.id))?;
    let (input_file, target_file) = (format!("{}.input.wav", entry.id), format!("{}.target.wav", entry.id));
    let a = write_wav(&pair.input, out_dir.join(&input_file), encoding)?;
    let b = write_wav(&pair.target, out_dir.join(&target_file), encoding)?;
    let mut hashes = String::new();
    for f in [&input_file, &target_file] {
        let p = out_dir.join(f);
        let bytes = std::fs::read(&p).with_context(|| format!("reading back {}", p.display()))?;
        hashes.push_str(&format!("{f} {}\n", sha256_hex(&bytes)));
    }
    log::info!("simulated {}", entry.id);
    let record = ItemRecord {
        metadata: pair.metadata,
        input_file,
        target_file,
        clamped_samples: a.clamped + b.clamped,
    };
    Ok((record, hashes))
}

pub fn run(args: &Args, ctx: &Context) -> Result<Value> {
    let cfg = &ctx.config;
    let manifest = required(&args.manifest, &cfg.simulate.manifest, "--manifest")?;
    let recipe_path = required(&args.recipe, &cfg.simulate.recipe, "--recipe")?;
    let out_dir = required(&args.out_dir, &cfg.simulate.out_dir, "--out-dir")?;
    let encoding: WavEncoding = args
        .encoding
        .clone()
        .or_else(|| cfg.simulate.encoding.clone())
        .unwrap_or_else(|| "float32".into())
        .parse()?;
    let target = match args.target.clone().or_else(|| cfg.simulate.target.clone()) {
        Some(t) => Some(t.parse::<TargetKind>()?),
        None => None,
    };

    let entries = ingest_manifest(&manifest)?;
    for e in &entries {
        check_id(&e.id)?;
    }
    let mut template: RecipeTemplate = super::read_json(&recipe_path)?;
    if let Some(kind) = target {
        for step in &mut template.steps {
            if let Step::Reverb { target, .. } = step {
                *target = kind;
            }
        }
    }
    let noise_dir = args.noise_dir.clone().or_else(|| cfg.assets.noise_dir.clone());
    let rir_dir = args.rir_dir.clone().or_else(|| cfg.assets.rir_dir.clone());
    let mut bank = AssetBank::from_dirs(noise_dir.as_deref(), rir_dir.as_deref())?;
    bank.resample_assets = args.resample_assets || cfg.assets.resample;

    std::fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let audio_base = base_dir(&manifest);
    let results: Vec<(ItemRecord, String)> = ctx.pool()?.install(|| {
        entries
            .par_iter()
            .map(|e| process(e, &template.steps, &bank, ctx.seed, &audio_base, &out_dir, encoding))
            .collect::<Result<_>>()
    })?;

    let mut metadata = String::new();
    let mut digest_input = String::new();
    let mut clamped = 0;
    for (record, hashes) in &results {
        metadata.push_str(&serde_json::to_string(record)?);
        metadata.push('\n');
        digest_input.push_str(hashes);
        clamped += record.clamped_samples;
    }
    let meta_path = out_dir.join("metadata.jsonl");
    write_bytes(&meta_path, &metadata)?;
    digest_input.push_str(&format!("metadata.jsonl {}\n", sha256_hex(metadata.as_bytes())));
    to_value(&SimulateSummary {
        items: results.len(),
        out_dir: out_dir.display().to_string(),
        metadata: meta_path.display().to_string(),
        encoding: format!("{encoding:?}").to_lowercase(),
        clamped_samples: clamped,
        digest: sha256_hex(digest_input.as_bytes()),
    })
}
