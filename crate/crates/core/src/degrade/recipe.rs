use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ops::{add_noise, bandlimit, bandlimit_taps, clip, codec_crush, packet_loss, wind_noise, LossModel, WindGain};
use crate::audio::{derive_stream, read_wav, resample, AudioBuffer, RandomStream};
use crate::error::{Error, Result};
use crate::rir::{decompose_rir, make_target, render_reverberant, TargetKind, DEFAULT_EARLY_WINDOW_MS};

/// Asset name that asks for a bank entry chosen by the item's stream.
pub const RANDOM_ASSET: &str = "*";

/// One distortion step. Serialized with a `kind` tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Step {
    Noise {
        asset: String,
        snr_db: f64,
    },
    Reverb {
        rir: String,
        #[serde(default)]
        target: TargetKind,
    },
    Clip {
        threshold_ratio: f64,
    },
    Bandlimit {
        cutoff_hz: f64,
    },
    Codec {
        bits: u32,
        #[serde(default)]
        mulaw: bool,
    },
    PacketLoss {
        packet_ms: f64,
        loss: LossModel,
    },
    Wind {
        /// `None` disables the step.
        gain_db: Option<f64>,
        /// Recorded wind noise to use instead of the synthetic generator.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        asset: Option<String>,
    },
}

impl Step {
    pub fn kind(&self) -> &'static str {
        match self {
            Step::Noise { .. } => "noise",
            Step::Reverb { .. } => "reverb",
            Step::Clip { .. } => "clip",
            Step::Bandlimit { .. } => "bandlimit",
            Step::Codec { .. } => "codec",
            Step::PacketLoss { .. } => "packet_loss",
            Step::Wind { .. } => "wind",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradationRecipe {
    pub item_id: String,
    #[serde(default)]
    pub steps: Vec<Step>,
}

impl DegradationRecipe {
    pub fn new(item_id: impl Into<String>, steps: Vec<Step>) -> Self {
        Self {
            item_id: item_id.into(),
            steps,
        }
    }
}

/// Parameters a step actually used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Realized {
    Noise {
        asset: String,
        snr_db: f64,
        offset: usize,
    },
    Reverb {
        rir: String,
        n0: usize,
        gain: f64,
        target: TargetKind,
    },
    Clip {
        threshold: f64,
        clipped_samples: usize,
    },
    Bandlimit {
        cutoff_hz: f64,
        taps: usize,
        pass_through: bool,
    },
    Codec {
        bits: u32,
        mulaw: bool,
    },
    PacketLoss {
        packet_len: usize,
        packets: usize,
        lost: usize,
        mask_sha256: String,
    },
    Wind {
        gain_db: Option<f64>,
        source: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub index: usize,
    pub step: Step,
    pub realized: Realized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMetadata {
    pub item_id: String,
    pub root_seed: u64,
    pub fs: u32,
    pub samples: usize,
    pub steps: Vec<StepRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegradedPair {
    pub input: AudioBuffer,
    pub target: AudioBuffer,
    pub metadata: PairMetadata,
}

/// Named noise and RIR assets. Lookups are read-only, so a bank can be
/// shared across workers.
#[derive(Debug, Clone, Default)]
pub struct AssetBank {
    noise: BTreeMap<String, AudioBuffer>,
    rirs: BTreeMap<String, AudioBuffer>,
    /// Resample assets to the signal rate instead of rejecting a mismatch.
    pub resample_assets: bool,
}

fn load_wavs(dir: &Path) -> Result<BTreeMap<String, AudioBuffer>> {
    let mut out = BTreeMap::new();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()).map(|e| e.eq_ignore_ascii_case("wav")) != Some(true) {
            continue;
        }
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        out.insert(name, read_wav(&path)?);
    }
    Ok(out)
}

impl AssetBank {
    pub fn new() -> Self {
        Self::default()
    }

    /// Loads every `.wav` in the given directories, keyed by file stem.
    pub fn from_dirs(noise_dir: Option<&Path>, rir_dir: Option<&Path>) -> Result<Self> {
        Ok(Self {
            noise: noise_dir.map(load_wavs).transpose()?.unwrap_or_default(),
            rirs: rir_dir.map(load_wavs).transpose()?.unwrap_or_default(),
            resample_assets: false,
        })
    }

    pub fn insert_noise(&mut self, name: impl Into<String>, buf: AudioBuffer) {
        self.noise.insert(name.into(), buf);
    }

    pub fn insert_rir(&mut self, name: impl Into<String>, buf: AudioBuffer) {
        self.rirs.insert(name.into(), buf);
    }

    pub fn noise_names(&self) -> impl Iterator<Item = &str> {
        self.noise.keys().map(String::as_str)
    }

    pub fn rir_names(&self) -> impl Iterator<Item = &str> {
        self.rirs.keys().map(String::as_str)
    }

    fn resolve(
        map: &BTreeMap<String, AudioBuffer>,
        name: &str,
        fs: u32,
        resample_assets: bool,
        stream: &mut RandomStream,
    ) -> Result<(String, AudioBuffer)> {
        let (key, buf) = if name == RANDOM_ASSET {
            if map.is_empty() {
                return Err(Error::UnknownAsset(name.to_string()));
            }
            map.iter().nth(stream.below(map.len())).unwrap()
        } else {
            map.get_key_value(name).ok_or_else(|| Error::UnknownAsset(name.to_string()))?
        };
        let buf = if buf.fs() == fs {
            buf.clone()
        } else if resample_assets {
            resample(buf, fs)?
        } else {
            return Err(Error::RateMismatch(fs, buf.fs()));
        };
        Ok((key.clone(), buf))
    }

    fn noise(&self, name: &str, fs: u32, stream: &mut RandomStream) -> Result<(String, AudioBuffer)> {
        Self::resolve(&self.noise, name, fs, self.resample_assets, stream)
    }

    fn rir(&self, name: &str, fs: u32, stream: &mut RandomStream) -> Result<(String, AudioBuffer)> {
        Self::resolve(&self.rirs, name, fs, self.resample_assets, stream)
    }
}

/// Runs `recipe` on the clean signal `s`. Each step draws from its own
/// substream of `(root_seed, item_id)`, so the result does not depend on
/// which worker runs it or in what order items are processed.
pub fn apply_recipe(s: &AudioBuffer, recipe: &DegradationRecipe, bank: &AssetBank, root_seed: u64) -> Result<DegradedPair> {
    let base = derive_stream(root_seed, recipe.item_id.as_bytes());
    let fs = s.fs();
    let mut input = s.clone();
    let mut target = s.clone();
    let mut records = Vec::with_capacity(recipe.steps.len());

    for (index, step) in recipe.steps.iter().enumerate() {
        let mut stream = base.substream(&format!("step{index}"));
        let mut resolved = step.clone();
        let realized = match step {
            Step::Noise { asset, snr_db } => {
                let (name, noise) = bank.noise(asset, fs, &mut stream)?;
                let mix = add_noise(&input, &noise, *snr_db, &mut stream)?;
                input = mix.mixed;
                resolved = Step::Noise {
                    asset: name.clone(),
                    snr_db: *snr_db,
                };
                Realized::Noise {
                    asset: name,
                    snr_db: mix.realized_snr_db,
                    offset: mix.offset,
                }
            }
            Step::Reverb { rir, target: kind } => {
                let (name, r) = bank.rir(rir, fs, &mut stream)?;
                let dec = decompose_rir(&r, DEFAULT_EARLY_WINDOW_MS)?;
                input = render_reverberant(&input, &r)?;
                target = make_target(&target, &dec, *kind)?;
                resolved = Step::Reverb {
                    rir: name.clone(),
                    target: *kind,
                };
                Realized::Reverb {
                    rir: name,
                    n0: dec.n0,
                    gain: dec.gain,
                    target: *kind,
                }
            }
            Step::Clip { threshold_ratio } => {
                let threshold = threshold_ratio * input.peak();
                let out = clip(&input, *threshold_ratio)?;
                let clipped_samples = input
                    .samples()
                    .iter()
                    .zip(out.samples())
                    .filter(|(a, b)| a != b)
                    .count();
                input = out;
                Realized::Clip {
                    threshold,
                    clipped_samples,
                }
            }
            Step::Bandlimit { cutoff_hz } => {
                let pass_through = *cutoff_hz >= 0.99 * fs as f64 / 2.0;
                input = bandlimit(&input, *cutoff_hz)?;
                Realized::Bandlimit {
                    cutoff_hz: *cutoff_hz,
                    taps: if pass_through { 0 } else { bandlimit_taps(fs) },
                    pass_through,
                }
            }
            Step::Codec { bits, mulaw } => {
                input = codec_crush(&input, *bits, *mulaw)?;
                Realized::Codec {
                    bits: *bits,
                    mulaw: *mulaw,
                }
            }
            Step::PacketLoss { packet_ms, loss } => {
                let r = packet_loss(&input, *packet_ms, *loss, &mut stream)?;
                let realized = Realized::PacketLoss {
                    packet_len: r.packet_len,
                    packets: r.lost.len(),
                    lost: r.lost_count(),
                    mask_sha256: r.mask_digest(),
                };
                input = r.output;
                realized
            }
            Step::Wind { gain_db, asset } => match (gain_db, asset) {
                (None, _) => Realized::Wind {
                    gain_db: None,
                    source: "off".into(),
                },
                (Some(g), Some(asset)) => {
                    let (name, noise) = bank.noise(asset, fs, &mut stream)?;
                    input = add_noise(&input, &noise, -g, &mut stream)?.mixed;
                    resolved = Step::Wind {
                        gain_db: Some(*g),
                        asset: Some(name.clone()),
                    };
                    Realized::Wind {
                        gain_db: Some(*g),
                        source: name,
                    }
                }
                (Some(g), None) => {
                    input = wind_noise(&input, WindGain::Db(*g), &mut stream)?;
                    Realized::Wind {
                        gain_db: Some(*g),
                        source: "synthetic".into(),
                    }
                }
            },
        };
        records.push(StepRecord {
            index,
            step: resolved,
            realized,
        });
    }

    Ok(DegradedPair {
        metadata: PairMetadata {
            item_id: recipe.item_id.clone(),
            root_seed,
            fs,
            samples: input.len(),
            steps: records,
        },
        input,
        target,
    })
}
