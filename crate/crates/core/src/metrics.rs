//! Reference-based quality metrics: SDR, log-spectral distance and mel
//! cepstral distortion.
//!
//! LSD and MCD are computed on the SFI-STFT grid (40 ms frames, 50 % hop),
//! so they are only defined at rates the transform supports.

use std::f64::consts::{LN_10, PI};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::audio::{read_wav, AudioBuffer};
use crate::error::{Error, Result};
use crate::sfi::{stft, SpectrogramFrameGrid};

/// SDR reported when the residual is numerically zero.
pub const SDR_CAP_DB: f64 = 100.0;
const SDR_FLOOR_RATIO: f64 = 1e-20;
pub const LSD_EPS: f64 = 1e-10;
/// 10 * sqrt(2) / ln(10).
pub const MCD_SCALE: f64 = 10.0 * std::f64::consts::SQRT_2 / LN_10;

fn check_pair(a: &AudioBuffer, b: &AudioBuffer) -> Result<()> {
    a.ensure_same_rate(b)?;
    if a.len() != b.len() {
        return Err(Error::Shape(format!("lengths differ: {} vs {}", a.len(), b.len())));
    }
    Ok(())
}

/// 10 log10(|ref|^2 / |ref - est|^2), capped at [`SDR_CAP_DB`].
pub fn sdr(reference: &AudioBuffer, est: &AudioBuffer) -> Result<f64> {
    check_pair(reference, est)?;
    let e_ref = reference.energy();
    if e_ref == 0.0 {
        return Err(Error::ZeroEnergy("reference"));
    }
    let e_res: f64 = reference
        .samples()
        .iter()
        .zip(est.samples())
        .map(|(r, e)| (r - e).powi(2))
        .sum();
    if e_res < SDR_FLOOR_RATIO * e_ref {
        return Ok(SDR_CAP_DB);
    }
    Ok((10.0 * (e_ref / e_res).log10()).min(SDR_CAP_DB))
}

/// Frame-averaged RMS of the power-spectrum log ratio, in dB.
pub fn lsd(reference: &AudioBuffer, est: &AudioBuffer) -> Result<f64> {
    check_pair(reference, est)?;
    let (r, e) = (stft(reference)?, stft(est)?);
    Ok(lsd_grids(&r, &e))
}

pub(crate) fn lsd_grids(r: &SpectrogramFrameGrid, e: &SpectrogramFrameGrid) -> f64 {
    let bins = r.n_bins() as f64;
    let total: f64 = (0..r.n_frames())
        .map(|f| {
            let ss: f64 = r
                .frame(f)
                .iter()
                .zip(e.frame(f))
                .map(|(a, b)| (10.0 * ((a.norm_sqr() + LSD_EPS) / (b.norm_sqr() + LSD_EPS)).log10()).powi(2))
                .sum();
            (ss / bins).sqrt()
        })
        .sum();
    total / r.n_frames() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MelParams {
    pub n_mels: usize,
    /// Cepstra c1..=c_n compared; c0 is always excluded.
    pub n_cepstra: usize,
    pub fmin: f64,
    pub fmax: f64,
}

impl MelParams {
    /// 23 mel bands, 13 cepstra, full band up to Nyquist.
    pub fn for_rate(fs: u32) -> Self {
        Self {
            n_mels: 23,
            n_cepstra: 13,
            fmin: 0.0,
            fmax: fs as f64 / 2.0,
        }
    }

    pub fn validate(&self, fs: u32) -> Result<()> {
        let nyquist = fs as f64 / 2.0;
        if !(0.0 <= self.fmin && self.fmin < self.fmax && self.fmax <= nyquist) {
            return Err(Error::param(
                "mel",
                format!("need 0 <= fmin < fmax <= {nyquist}, got {} and {}", self.fmin, self.fmax),
            ));
        }
        if self.n_cepstra == 0 || self.n_cepstra >= self.n_mels {
            return Err(Error::param("mel", "need 0 < n_cepstra < n_mels"));
        }
        Ok(())
    }
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// HTK-style triangular filters sampled at the bin centre frequencies.
/// Returns `n_mels` rows of `n_bins` weights.
pub fn mel_filterbank(mel: &MelParams, n_bins: usize, bin_hz: f64) -> Vec<Vec<f64>> {
    let (lo, hi) = (hz_to_mel(mel.fmin), hz_to_mel(mel.fmax));
    let edges: Vec<f64> = (0..mel.n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (mel.n_mels + 1) as f64))
        .collect();
    (0..mel.n_mels)
        .map(|m| {
            let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..n_bins)
                .map(|k| {
                    let f = k as f64 * bin_hz;
                    if f <= l || f >= r {
                        0.0
                    } else if f <= c {
                        (f - l) / (c - l)
                    } else {
                        (r - f) / (r - c)
                    }
                })
                .collect()
        })
        .collect()
}

fn cepstra(grid: &SpectrogramFrameGrid, mel: &MelParams, fb: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let m = mel.n_mels as f64;
    (0..grid.n_frames())
        .map(|f| {
            let power: Vec<f64> = grid.frame(f).iter().map(|c| c.norm_sqr()).collect();
            let log_mel: Vec<f64> = fb
                .iter()
                .map(|row| {
                    let e: f64 = row.iter().zip(&power).map(|(w, p)| w * p).sum();
                    e.max(f64::MIN_POSITIVE).ln()
                })
                .collect();
            (1..=mel.n_cepstra)
                .map(|k| {
                    (2.0 / m).sqrt()
                        * log_mel
                            .iter()
                            .enumerate()
                            .map(|(i, v)| v * (PI * k as f64 * (i as f64 + 0.5) / m).cos())
                            .sum::<f64>()
                })
                .collect()
        })
        .collect()
}

/// Mel cepstral distortion in dB, frames aligned one to one.
pub fn mcd(reference: &AudioBuffer, est: &AudioBuffer, mel: &MelParams) -> Result<f64> {
    check_pair(reference, est)?;
    mel.validate(reference.fs())?;
    let (r, e) = (stft(reference)?, stft(est)?);
    let p = r.params();
    let fb = mel_filterbank(mel, p.n_bins, p.bin_hz());
    let (cr, ce) = (cepstra(&r, mel, &fb), cepstra(&e, mel, &fb));
    let total: f64 = cr
        .iter()
        .zip(&ce)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt())
        .sum();
    Ok(MCD_SCALE * total / cr.len() as f64)
}

/// One line of a batch request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSpec {
    pub ref_path: PathBuf,
    pub est_path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMetrics {
    pub ref_path: PathBuf,
    pub est_path: PathBuf,
    pub sdr_db: f64,
    pub lsd_db: f64,
    pub mcd_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchAggregate {
    pub count: usize,
    pub sdr_db: Summary,
    pub lsd_db: Summary,
    pub mcd_db: Summary,
}

pub fn evaluate_buffers(reference: &AudioBuffer, est: &AudioBuffer) -> Result<(f64, f64, f64)> {
    Ok((
        sdr(reference, est)?,
        lsd(reference, est)?,
        mcd(reference, est, &MelParams::for_rate(reference.fs()))?,
    ))
}

pub fn evaluate_pair(spec: &PairSpec, base: &Path) -> Result<PairMetrics> {
    let r = read_wav(base.join(&spec.ref_path))?;
    let e = read_wav(base.join(&spec.est_path))?;
    let (sdr_db, lsd_db, mcd_db) = evaluate_buffers(&r, &e)?;
    Ok(PairMetrics {
        ref_path: spec.ref_path.clone(),
        est_path: spec.est_path.clone(),
        sdr_db,
        lsd_db,
        mcd_db,
    })
}

fn summarize(values: impl Iterator<Item = f64> + Clone) -> Summary {
    let n = values.clone().count() as f64;
    if n == 0.0 {
        return Summary { mean: 0.0, std: 0.0 };
    }
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Summary { mean, std: var.sqrt() }
}

pub fn aggregate(records: &[PairMetrics]) -> BatchAggregate {
    BatchAggregate {
        count: records.len(),
        sdr_db: summarize(records.iter().map(|r| r.sdr_db)),
        lsd_db: summarize(records.iter().map(|r| r.lsd_db)),
        mcd_db: summarize(records.iter().map(|r| r.mcd_db)),
    }
}
