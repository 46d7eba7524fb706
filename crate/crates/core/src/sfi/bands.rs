use serde::{Deserialize, Serialize};

use super::SfiParams;
use crate::error::{Error, Result};

pub const DEFAULT_BAND_WIDTH_HZ: f64 = 4000.0;

/// One frequency band, as a half-open bin range plus its nominal edges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub low_bin: usize,
    pub high_bin: usize,
    pub low_hz: f64,
    pub high_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandPartition {
    pub fs: u32,
    pub n_bins: usize,
    pub band_width_hz: f64,
    pub bands: Vec<Band>,
}

/// Splits `[0, Nyquist]` into full `band_width_hz` bands plus a remainder
/// band reaching Nyquist when it does not divide evenly. Interior edges sit
/// at bin `round(edge_hz / bin_hz)`; the last band owns the Nyquist bin.
pub fn band_partition(fs: u32, band_width_hz: f64) -> Result<BandPartition> {
    let params = SfiParams::for_rate(fs)?;
    if !(band_width_hz > 0.0 && band_width_hz.is_finite()) {
        return Err(Error::param("band_width_hz", "must be positive and finite"));
    }
    let nyquist = fs as f64 / 2.0;
    let ratio = nyquist / band_width_hz;
    let full = (ratio + 1e-9).floor() as usize;
    let remainder = nyquist - full as f64 * band_width_hz;
    let n_bands = if full == 0 {
        1
    } else if remainder > 1e-9 * nyquist {
        full + 1
    } else {
        full
    };

    let bin_hz = params.bin_hz();
    let mut bands = Vec::with_capacity(n_bands);
    let mut low_bin = 0;
    for i in 0..n_bands {
        let low_hz = i as f64 * band_width_hz;
        let last = i + 1 == n_bands;
        let high_hz = if last { nyquist } else { (i + 1) as f64 * band_width_hz };
        let high_bin = if last {
            params.n_bins
        } else {
            (high_hz / bin_hz).round() as usize
        };
        if high_bin <= low_bin {
            return Err(Error::param(
                "band_width_hz",
                format!("{band_width_hz} Hz is narrower than one {bin_hz} Hz bin"),
            ));
        }
        bands.push(Band {
            low_bin,
            high_bin,
            low_hz,
            high_hz,
        });
        low_bin = high_bin;
    }
    Ok(BandPartition {
        fs,
        n_bins: params.n_bins,
        band_width_hz,
        bands,
    })
}

impl BandPartition {
    pub fn upper_edges_hz(&self) -> Vec<f64> {
        self.bands.iter().map(|b| b.high_hz).collect()
    }

    /// Index of the band that owns `bin`.
    pub fn band_of(&self, bin: usize) -> Option<usize> {
        self.bands.iter().position(|b| (b.low_bin..b.high_bin).contains(&bin))
    }
}
