use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::audio::{AudioBuffer, RandomStream};
use crate::audio::convolve_slices;
use crate::dsp::kaiser_lowpass;
use crate::error::{Error, Result};

/// Result of [`add_noise`].
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseMix {
    pub mixed: AudioBuffer,
    /// SNR measured between `s` and the scaled noise actually added.
    pub realized_snr_db: f64,
    /// Start offset into the noise asset (non-zero only when it was tiled).
    pub offset: usize,
}

pub fn snr_db(signal: &[f64], noise: &[f64]) -> f64 {
    let es: f64 = signal.iter().map(|x| x * x).sum();
    let en: f64 = noise.iter().map(|x| x * x).sum();
    10.0 * (es / en).log10()
}

/// Mixes `noise` into `s` at `snr_db`. Noise longer than the signal is
/// truncated; shorter noise is tiled from a random circular offset.
pub fn add_noise(s: &AudioBuffer, noise: &AudioBuffer, snr_db_target: f64, stream: &mut RandomStream) -> Result<NoiseMix> {
    s.ensure_same_rate(noise)?;
    if !snr_db_target.is_finite() {
        return Err(Error::param("snr_db", "must be finite"));
    }
    if s.energy() == 0.0 {
        return Err(Error::ZeroEnergy("signal"));
    }
    if noise.energy() == 0.0 {
        return Err(Error::ZeroEnergy("noise"));
    }
    let n = s.len();
    let src = noise.samples();
    let offset = if src.len() < n { stream.below(src.len()) } else { 0 };
    let fitted: Vec<f64> = (0..n).map(|i| src[(offset + i) % src.len()]).collect();
    let e_fit: f64 = fitted.iter().map(|x| x * x).sum();
    if e_fit == 0.0 {
        return Err(Error::ZeroEnergy("noise segment"));
    }
    let gain = (s.energy() / (e_fit * 10f64.powf(snr_db_target / 10.0))).sqrt();
    let scaled: Vec<f64> = fitted.iter().map(|x| x * gain).collect();
    let realized_snr_db = snr_db(s.samples(), &scaled);
    let mixed = s.samples().iter().zip(&scaled).map(|(a, b)| a + b).collect();
    Ok(NoiseMix {
        mixed: AudioBuffer::from_parts(mixed, s.fs()),
        realized_snr_db,
        offset,
    })
}

/// Hard clipping at `threshold_ratio * max|s|`.
pub fn clip(s: &AudioBuffer, threshold_ratio: f64) -> Result<AudioBuffer> {
    if !(threshold_ratio > 0.0 && threshold_ratio <= 1.0) {
        return Err(Error::param("threshold_ratio", format!("{threshold_ratio} not in (0, 1]")));
    }
    if threshold_ratio == 1.0 {
        return Ok(s.clone());
    }
    let t = threshold_ratio * s.peak();
    Ok(s.map(|x| x.clamp(-t, t)))
}

pub const BANDLIMIT_BETA: f64 = 8.6;
pub const BANDLIMIT_FILTER_MS: f64 = 8.0;

/// Tap count for the band-limiting filter: 8 ms of samples, rounded up to odd.
pub fn bandlimit_taps(fs: u32) -> usize {
    let n = (BANDLIMIT_FILTER_MS / 1000.0 * fs as f64).ceil() as usize;
    n | 1
}

/// Zero-phase (delay-compensated) Kaiser low-pass. Cutoffs at or above 99 %
/// of Nyquist pass the signal through untouched.
pub fn bandlimit(s: &AudioBuffer, cutoff_hz: f64) -> Result<AudioBuffer> {
    if !(cutoff_hz > 0.0) {
        return Err(Error::param("cutoff_hz", "must be positive"));
    }
    let nyquist = s.fs() as f64 / 2.0;
    if cutoff_hz >= 0.99 * nyquist || s.is_empty() {
        return Ok(s.clone());
    }
    let taps = bandlimit_taps(s.fs());
    let h = kaiser_lowpass(cutoff_hz / s.fs() as f64, taps, BANDLIMIT_BETA);
    let full = convolve_slices(s.samples(), &h);
    let delay = (taps - 1) / 2;
    Ok(AudioBuffer::from_parts(full[delay..delay + s.len()].to_vec(), s.fs()))
}

pub const MU_LAW_MU: f64 = 255.0;

pub fn mu_law_compress(x: f64) -> f64 {
    x.signum() * (1.0 + MU_LAW_MU * x.abs()).ln() / (1.0 + MU_LAW_MU).ln()
}

pub fn mu_law_expand(y: f64) -> f64 {
    y.signum() * ((1.0 + MU_LAW_MU).powf(y.abs()) - 1.0) / MU_LAW_MU
}

/// Uniform mid-tread quantizer with `2^bits` levels on [-1, 1).
pub fn quantize_uniform(x: f64, bits: u32) -> f64 {
    let full = (1u64 << (bits - 1)) as f64;
    (x.clamp(-1.0, 1.0) * full).round().clamp(-full, full - 1.0) / full
}

/// Codec stand-in: bit-depth reduction, optionally through mu-law
/// companding.
pub fn codec_crush(s: &AudioBuffer, bits: u32, mulaw: bool) -> Result<AudioBuffer> {
    if !(2..=16).contains(&bits) {
        return Err(Error::param("bits", format!("{bits} not in [2, 16]")));
    }
    Ok(if mulaw {
        s.map(|x| mu_law_expand(quantize_uniform(mu_law_compress(x.clamp(-1.0, 1.0)), bits)))
    } else {
        s.map(|x| quantize_uniform(x, bits))
    })
}

/// Packet loss process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum LossModel {
    /// Each packet lost independently with probability `p`.
    Bernoulli { p: f64 },
    /// Two-state Markov chain starting in the good state: good -> lost with
    /// `p_loss`, lost -> lost with `p_stay`.
    Gilbert { p_loss: f64, p_stay: f64 },
}

impl LossModel {
    fn validate(&self) -> Result<()> {
        let probs: &[f64] = match self {
            LossModel::Bernoulli { p } => &[*p],
            LossModel::Gilbert { p_loss, p_stay } => &[*p_loss, *p_stay],
        };
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::param("loss", format!("probabilities {probs:?} outside [0, 1]")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PacketLossResult {
    pub output: AudioBuffer,
    /// One entry per packet, `true` where the packet was dropped.
    pub lost: Vec<bool>,
    pub packet_len: usize,
}

impl PacketLossResult {
    pub fn lost_count(&self) -> usize {
        self.lost.iter().filter(|&&l| l).count()
    }

    /// Hex SHA-256 of the mask, one byte per packet.
    pub fn mask_digest(&self) -> String {
        let bytes: Vec<u8> = self.lost.iter().map(|&l| l as u8).collect();
        format!("{:x}", Sha256::digest(bytes))
    }
}

pub fn packet_loss(s: &AudioBuffer, packet_ms: f64, model: LossModel, stream: &mut RandomStream) -> Result<PacketLossResult> {
    if !(packet_ms > 0.0 && packet_ms.is_finite()) {
        return Err(Error::param("packet_ms", "must be positive"));
    }
    model.validate()?;
    let packet_len = ((packet_ms * s.fs() as f64 / 1000.0).round() as usize).max(1);
    let n_packets = s.len().div_ceil(packet_len);
    let mut in_loss = false;
    let lost: Vec<bool> = (0..n_packets)
        .map(|_| {
            let u = stream.uniform();
            in_loss = match model {
                LossModel::Bernoulli { p } => u < p,
                LossModel::Gilbert { p_loss, p_stay } => {
                    if in_loss {
                        u < p_stay
                    } else {
                        u < p_loss
                    }
                }
            };
            in_loss
        })
        .collect();
    let mut out = s.samples().to_vec();
    for (chunk, &l) in out.chunks_mut(packet_len).zip(&lost) {
        if l {
            chunk.fill(0.0);
        }
    }
    Ok(PacketLossResult {
        output: AudioBuffer::from_parts(out, s.fs()),
        lost,
        packet_len,
    })
}

pub const WIND_CUTOFF_HZ: f64 = 300.0;
pub const WIND_GUST_HZ: (f64, f64) = (0.5, 2.0);

fn one_pole_lowpass(x: &mut [f64], cutoff_hz: f64, fs: f64) {
    let a = (-2.0 * PI * cutoff_hz / fs).exp();
    let mut y = 0.0;
    for v in x.iter_mut() {
        y = (1.0 - a) * *v + a * y;
        *v = y;
    }
}

/// Synthetic wind: leaky-integrated (Brownian) noise, low-passed at 300 Hz by
/// two one-pole sections, shaped by a gust envelope with a random rate in
/// [0.5, 2] Hz. Unit RMS.
pub fn synthesize_wind(len: usize, fs: u32, stream: &mut RandomStream) -> Vec<f64> {
    if len == 0 {
        return Vec::new();
    }
    let fs_f = fs as f64;
    // Leak corner around 5 Hz keeps the random walk bounded.
    let leak = (-2.0 * PI * 5.0 / fs_f).exp();
    let mut acc = 0.0;
    let mut w: Vec<f64> = (0..len)
        .map(|_| {
            acc = leak * acc + stream.normal();
            acc
        })
        .collect();
    one_pole_lowpass(&mut w, WIND_CUTOFF_HZ, fs_f);
    one_pole_lowpass(&mut w, WIND_CUTOFF_HZ, fs_f);

    let rate = stream.uniform_range(WIND_GUST_HZ.0, WIND_GUST_HZ.1);
    let rate2 = stream.uniform_range(WIND_GUST_HZ.0, WIND_GUST_HZ.1);
    let (ph1, ph2) = (stream.uniform_range(0.0, 2.0 * PI), stream.uniform_range(0.0, 2.0 * PI));
    for (i, v) in w.iter_mut().enumerate() {
        let t = i as f64 / fs_f;
        let env = 0.55 + 0.3 * (2.0 * PI * rate * t + ph1).sin() + 0.15 * (2.0 * PI * rate2 * t + ph2).sin();
        *v *= env;
    }
    let mean = w.iter().sum::<f64>() / len as f64;
    w.iter_mut().for_each(|v| *v -= mean);
    let rms = (w.iter().map(|v| v * v).sum::<f64>() / len as f64).sqrt();
    if rms > 0.0 {
        w.iter_mut().for_each(|v| *v /= rms);
    }
    w
}

/// Level of the wind component relative to the signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindGain {
    Off,
    Db(f64),
}

/// Adds synthetic wind at `gain` dB relative to the signal energy. For a
/// silent signal the reference is unit RMS.
pub fn wind_noise(s: &AudioBuffer, gain: WindGain, stream: &mut RandomStream) -> Result<AudioBuffer> {
    let gain_db = match gain {
        WindGain::Off => return Ok(s.clone()),
        WindGain::Db(g) if g.is_finite() => g,
        WindGain::Db(g) if g == f64::NEG_INFINITY => return Ok(s.clone()),
        WindGain::Db(g) => return Err(Error::param("gain_db", format!("{g}"))),
    };
    let wind = synthesize_wind(s.len(), s.fs(), stream);
    let e_ref = if s.energy() > 0.0 { s.energy() } else { s.len() as f64 };
    let e_wind: f64 = wind.iter().map(|v| v * v).sum();
    if e_wind == 0.0 {
        return Ok(s.clone());
    }
    let g = (e_ref * 10f64.powf(gain_db / 10.0) / e_wind).sqrt();
    Ok(AudioBuffer::from_parts(
        s.samples().iter().zip(&wind).map(|(a, b)| a + g * b).collect(),
        s.fs(),
    ))
}
