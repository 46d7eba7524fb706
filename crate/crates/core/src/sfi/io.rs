//! Binary interchange format for spectrogram grids.
//!
//! Little-endian layout:
//!
//! ```text
//! magic           4 bytes  "SFIG"
//! fs              u32
//! win             u32
//! hop             u32
//! frames          u32
//! bins            u32
//! original_length u64
//! data            frames * bins * (re: f32, im: f32), row-major (frame-major)
//! ```

use std::io::{Read, Write};
use std::path::Path;

use rustfft::num_complex::Complex64;

use super::{SfiParams, SpectrogramFrameGrid};
use crate::error::{Error, Result};

pub const GRID_MAGIC: &[u8; 4] = b"SFIG";
const HEADER_LEN: usize = 4 + 5 * 4 + 8;

pub fn encode_grid(grid: &SpectrogramFrameGrid) -> Vec<u8> {
    let p = grid.params();
    let mut out = Vec::with_capacity(HEADER_LEN + grid.data().len() * 8);
    out.extend_from_slice(GRID_MAGIC);
    for v in [p.fs, p.win_len as u32, p.hop_len as u32, grid.n_frames() as u32, p.n_bins as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(grid.original_length() as u64).to_le_bytes());
    for c in grid.data() {
        out.extend_from_slice(&(c.re as f32).to_le_bytes());
        out.extend_from_slice(&(c.im as f32).to_le_bytes());
    }
    out
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

pub fn decode_grid(bytes: &[u8]) -> Result<SpectrogramFrameGrid> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != GRID_MAGIC {
        return Err(Error::Format("not a spectrogram grid file".into()));
    }
    let fs = u32_at(bytes, 4);
    let (win, hop, frames, bins) = (
        u32_at(bytes, 8) as usize,
        u32_at(bytes, 12) as usize,
        u32_at(bytes, 16) as usize,
        u32_at(bytes, 20) as usize,
    );
    let original_length = u64::from_le_bytes(bytes[24..32].try_into().unwrap()) as usize;
    let params = SfiParams::for_rate(fs)?;
    if (params.win_len, params.hop_len, params.n_bins) != (win, hop, bins) {
        return Err(Error::Format(format!(
            "header geometry ({win}, {hop}, {bins}) does not match {fs} Hz"
        )));
    }
    let body = &bytes[HEADER_LEN..];
    if body.len() != frames * bins * 8 {
        return Err(Error::Format(format!(
            "expected {} data bytes, found {}",
            frames * bins * 8,
            body.len()
        )));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| {
            let re = f32::from_le_bytes(c[..4].try_into().unwrap());
            let im = f32::from_le_bytes(c[4..].try_into().unwrap());
            Complex64::new(re as f64, im as f64)
        })
        .collect();
    let grid = SpectrogramFrameGrid::new(params, original_length, frames, data)?;
    grid.validate()?;
    Ok(grid)
}

pub fn write_grid(grid: &SpectrogramFrameGrid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode_grid(grid)).map_err(|e| Error::io(path, e))
}

pub fn read_grid(path: impl AsRef<Path>) -> Result<SpectrogramFrameGrid> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_grid(&bytes)
}
