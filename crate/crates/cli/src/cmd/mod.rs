pub mod curate;
pub mod dp;
pub mod signal;
pub mod simulate;
pub mod twostage;

use std::path::{Path, PathBuf};

use anyhow::{Context as _, Result};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};
use uspeech_core::audio::read_wav;
use uspeech_core::sfi::{read_grid, stft};
use uspeech_core::SpectrogramFrameGrid;

use crate::Invalid;

pub fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    Ok(serde_json::to_value(v)?)
}

pub fn write_bytes(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| Invalid(format!("{}: {e}", path.display())).into())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// A required value from a flag or, failing that, the config file.
pub fn required<T: Clone>(flag: &Option<T>, config: &Option<T>, what: &str) -> Result<T> {
    flag.clone()
        .or_else(|| config.clone())
        .ok_or_else(|| Invalid(format!("missing {what}")).into())
}

/// Loads a spectrogram grid, computing it when given a WAV file.
pub fn load_grid(path: &Path) -> Result<SpectrogramFrameGrid> {
    let is_wav = path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("wav"));
    Ok(if is_wav { stft(&read_wav(path)?)? } else { read_grid(path)? })
}

pub fn base_dir(file: &Path) -> PathBuf {
    file.parent().map(Path::to_path_buf).unwrap_or_default()
}
