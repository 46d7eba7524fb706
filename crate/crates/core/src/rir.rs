//! Room impulse response decomposition and dereverberation targets.
//!
//! An RIR is split at its direct-path peak `n0` into a unit direct tap, an
//! early segment (the first `early_window_ms` after the peak, peak included)
//! and a late segment (everything after). Both segments are divided by the
//! signed peak value so the direct tap is exactly `+1`. Samples preceding the
//! peak are kept aside as a pre-peak residue; they take part in
//! reconstruction but not in target construction.

use serde::{Deserialize, Serialize};

use crate::audio::{convolve, AudioBuffer, ConvolveMode, RandomStream};
use crate::error::{Error, Result};

pub const DEFAULT_EARLY_WINDOW_MS: f64 = 50.0;
pub const MAX_TARGET_WINDOW_MS: f64 = 100.0;

/// Index of the largest-magnitude tap; ties resolve to the smallest index.
pub fn estimate_direct_path(rir: &AudioBuffer) -> Result<usize> {
    if rir.is_empty() {
        return Err(Error::Empty("impulse response"));
    }
    let mut best = 0;
    let mut best_mag = 0.0;
    for (i, x) in rir.samples().iter().enumerate() {
        if x.abs() > best_mag {
            best = i;
            best_mag = x.abs();
        }
    }
    if best_mag == 0.0 {
        return Err(Error::ZeroRir);
    }
    Ok(best)
}

/// Number of samples in an early window, counting the peak tap. A 0 ms
/// window still holds the peak itself.
pub fn early_window_len(window_ms: f64, fs: u32) -> usize {
    ((window_ms / 1000.0 * fs as f64).round() as usize).max(1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RirDecomposition {
    pub n0: usize,
    /// Signed value of the peak tap before normalization.
    pub gain: f64,
    /// Normalized early segment; `early[0] == 1.0`. Zero-padded when the RIR
    /// ends inside the window.
    pub early: Vec<f64>,
    /// Normalized late segment, starting at the early-window boundary.
    pub late: Vec<f64>,
    /// Raw (unnormalized) samples before `n0`.
    pub pre_peak: Vec<f64>,
    pub early_window_ms: f64,
    pub fs: u32,
    /// Length of the source RIR.
    pub source_len: usize,
}

/// Serializable summary of a decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionRecord {
    pub n0: usize,
    pub gain: f64,
    pub early_window_ms: f64,
    pub fs: u32,
    pub lengths: SegmentLengths,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentLengths {
    pub pre_peak: usize,
    pub early: usize,
    pub late: usize,
    pub total: usize,
}

pub fn decompose_rir(rir: &AudioBuffer, early_window_ms: f64) -> Result<RirDecomposition> {
    if !(early_window_ms >= 0.0 && early_window_ms.is_finite()) {
        return Err(Error::param("early_window_ms", "must be finite and non-negative"));
    }
    let n0 = estimate_direct_path(rir)?;
    let r = rir.samples();
    let gain = r[n0];
    let early_len = early_window_len(early_window_ms, rir.fs());
    let tail: Vec<f64> = r[n0..].iter().map(|x| x / gain).collect();
    let split = early_len.min(tail.len());
    let mut early = tail[..split].to_vec();
    early.resize(early_len, 0.0);
    // Division by itself is exact, but state the invariant explicitly.
    early[0] = 1.0;
    Ok(RirDecomposition {
        n0,
        gain,
        early,
        late: tail[split..].to_vec(),
        pre_peak: r[..n0].to_vec(),
        early_window_ms,
        fs: rir.fs(),
        source_len: r.len(),
    })
}

impl RirDecomposition {
    /// Normalized response from the peak onward, `[early || late]` without
    /// the zero padding of a window that overruns the RIR.
    pub fn normalized_tail(&self) -> Vec<f64> {
        let tail_len = self.source_len - self.n0;
        self.early
            .iter()
            .chain(&self.late)
            .copied()
            .take(tail_len)
            .collect()
    }

    /// Normalized early response for an arbitrary window length.
    pub fn early_for_window(&self, window_ms: f64) -> Vec<f64> {
        let len = early_window_len(window_ms, self.fs);
        let mut tail = self.normalized_tail();
        tail.truncate(len);
        tail
    }

    /// Rebuilds the source RIR: pre-peak residue, then `gain * [early || late]`.
    pub fn reconstruct(&self) -> Vec<f64> {
        let mut out = self.pre_peak.clone();
        out.extend(self.normalized_tail().iter().map(|x| x * self.gain));
        out
    }

    pub fn record(&self) -> DecompositionRecord {
        DecompositionRecord {
            n0: self.n0,
            gain: self.gain,
            early_window_ms: self.early_window_ms,
            fs: self.fs,
            lengths: SegmentLengths {
                pre_peak: self.pre_peak.len(),
                early: self.early.len(),
                late: self.late.len(),
                total: self.source_len,
            },
        }
    }
}

/// Learning target for dereverberation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetKind {
    /// The dry signal as-is, with no time shift.
    Anechoic,
    /// The dry signal delayed by the direct-path index.
    #[default]
    ShiftedAnechoic,
    /// The dry signal convolved with the normalized early response and
    /// delayed by the direct-path index.
    EarlyReflected { window_ms: f64 },
}

impl TargetKind {
    pub fn validate(&self) -> Result<()> {
        if let TargetKind::EarlyReflected { window_ms } = *self {
            if !(0.0..=MAX_TARGET_WINDOW_MS).contains(&window_ms) {
                return Err(Error::param(
                    "window_ms",
                    format!("{window_ms} outside [0, {MAX_TARGET_WINDOW_MS}]"),
                ));
            }
        }
        Ok(())
    }
}

impl std::str::FromStr for TargetKind {
    type Err = Error;

    /// Accepts `anechoic`, `shifted_anechoic`, `early_reflected` (50 ms) or
    /// `early_reflected:<ms>`.
    fn from_str(s: &str) -> Result<Self> {
        let kind = match s {
            "anechoic" => TargetKind::Anechoic,
            "shifted_anechoic" | "shifted" => TargetKind::ShiftedAnechoic,
            "early_reflected" | "early" => TargetKind::EarlyReflected {
                window_ms: DEFAULT_EARLY_WINDOW_MS,
            },
            other => {
                let ms = other
                    .strip_prefix("early_reflected:")
                    .or_else(|| other.strip_prefix("early:"))
                    .and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| Error::param("target", format!("unknown target kind {other:?}")))?;
                TargetKind::EarlyReflected { window_ms: ms }
            }
        };
        kind.validate()?;
        Ok(kind)
    }
}

/// Exponentially decaying noise tail behind a single direct tap of height
/// `direct_gain` at `predelay` samples. `tail_db` is the level of the first
/// tail sample relative to the direct tap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticRir {
    pub predelay: usize,
    pub length_ms: f64,
    pub rt60_ms: f64,
    pub tail_db: f64,
    pub direct_gain: f64,
}

impl Default for SyntheticRir {
    fn default() -> Self {
        Self {
            predelay: 40,
            length_ms: 300.0,
            rt60_ms: 400.0,
            tail_db: -30.0,
            direct_gain: 0.8,
        }
    }
}

impl SyntheticRir {
    pub fn render(&self, fs: u32, stream: &mut RandomStream) -> Result<AudioBuffer> {
        if !(self.length_ms > 0.0 && self.rt60_ms > 0.0 && self.direct_gain > 0.0) {
            return Err(Error::param("synthetic_rir", "length, rt60 and gain must be positive"));
        }
        let tail_len = (self.length_ms * fs as f64 / 1000.0).round() as usize;
        let amp = self.direct_gain * 10f64.powf(self.tail_db / 20.0);
        // 60 dB of amplitude decay over rt60.
        let rate = 3.0 * std::f64::consts::LN_10 / (self.rt60_ms * fs as f64 / 1000.0);
        let mut r = vec![0.0; self.predelay + tail_len.max(1)];
        r[self.predelay] = self.direct_gain;
        for k in 1..tail_len {
            r[self.predelay + k] = amp * (-rate * k as f64).exp() * stream.normal().clamp(-3.0, 3.0);
        }
        AudioBuffer::new(r, fs)
    }
}

/// Reverberant observation `s * r`, trimmed to the length of `s`.
pub fn render_reverberant(s: &AudioBuffer, rir: &AudioBuffer) -> Result<AudioBuffer> {
    convolve(s, rir, ConvolveMode::TrimToSignal)
}

fn delay_trim(x: &[f64], delay: usize, len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    if delay < len {
        let n = (len - delay).min(x.len());
        out[delay..delay + n].copy_from_slice(&x[..n]);
    }
    out
}

pub fn make_target(s: &AudioBuffer, dec: &RirDecomposition, kind: TargetKind) -> Result<AudioBuffer> {
    if s.fs() != dec.fs {
        return Err(Error::RateMismatch(s.fs(), dec.fs));
    }
    kind.validate()?;
    let len = s.len();
    let samples = match kind {
        TargetKind::Anechoic => return Ok(s.clone()),
        TargetKind::ShiftedAnechoic => delay_trim(s.samples(), dec.n0, len),
        TargetKind::EarlyReflected { window_ms } => {
            if s.is_empty() {
                Vec::new()
            } else {
                let kernel = AudioBuffer::from_parts(dec.early_for_window(window_ms), dec.fs);
                let wet = convolve(s, &kernel, ConvolveMode::TrimToSignal)?;
                delay_trim(wet.samples(), dec.n0, len)
            }
        }
    };
    Ok(AudioBuffer::from_parts(samples, s.fs()))
}

/// Lag in `[-max_lag, max_lag]` maximizing the cross-correlation
/// `sum_n a[n] * b[n - lag]`. Ties resolve to the lag closest to zero, then
/// the negative one.
pub fn alignment_lag(a: &[f64], b: &[f64], max_lag: usize) -> i64 {
    let max_lag = max_lag as i64;
    let mut best = (f64::NEG_INFINITY, 0i64);
    let mut lags: Vec<i64> = (-max_lag..=max_lag).collect();
    lags.sort_by_key(|l| (l.abs(), *l));
    for lag in lags {
        let mut acc = 0.0;
        for (n, &an) in a.iter().enumerate() {
            let m = n as i64 - lag;
            if m >= 0 && (m as usize) < b.len() {
                acc += an * b[m as usize];
            }
        }
        if acc > best.0 {
            best = (acc, lag);
        }
    }
    best.1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn buf(v: Vec<f64>, fs: u32) -> AudioBuffer {
        AudioBuffer::new(v, fs).unwrap()
    }

    fn impulse_at(i: usize, len: usize, fs: u32) -> AudioBuffer {
        let mut v = vec![0.0; len];
        v[i] = 1.0;
        buf(v, fs)
    }

    #[test]
    fn direct_path_cases() {
        assert_eq!(estimate_direct_path(&impulse_at(0, 10, 16000)).unwrap(), 0);

        let mut v: Vec<f64> = (0..2000).map(|i| 0.5 * ((i * 37 % 19) as f64 / 19.0 - 0.5)).collect();
        v[480] = 0.9;
        assert_eq!(estimate_direct_path(&buf(v, 48000)).unwrap(), 480);

        let mut v = vec![0.0; 200];
        v[50] = 1.0;
        v[100] = -1.2;
        assert_eq!(estimate_direct_path(&buf(v, 16000)).unwrap(), 100);
    }

    #[test]
    fn ties_pick_first_index() {
        let v = vec![0.0, -0.7, 0.7, 0.7];
        assert_eq!(estimate_direct_path(&buf(v, 8000)).unwrap(), 1);
    }

    #[test]
    fn all_zero_rir_rejected() {
        assert!(matches!(
            estimate_direct_path(&buf(vec![0.0; 16], 8000)),
            Err(Error::ZeroRir)
        ));
        assert!(matches!(decompose_rir(&buf(vec![0.0; 16], 8000), 50.0), Err(Error::ZeroRir)));
    }

    #[test]
    fn window_length_at_16k() {
        let mut v = vec![0.0; 4000];
        v[10] = 1.0;
        let dec = decompose_rir(&buf(v, 16000), 50.0).unwrap();
        assert_eq!(dec.early.len(), 800);
        assert_eq!(dec.late.len(), 4000 - 10 - 800);
    }

    #[test]
    fn pure_direct_path() {
        let dec = decompose_rir(&impulse_at(480, 4800, 48000), 50.0).unwrap();
        assert_eq!(dec.n0, 480);
        assert_eq!(dec.gain, 1.0);
        assert_eq!(dec.early[0], 1.0);
        assert!(dec.early[1..].iter().all(|&x| x == 0.0));
        assert!(dec.late.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn zero_window_keeps_only_peak() {
        let v: Vec<f64> = (0..300).map(|i| if i == 20 { -2.0 } else { 0.1 }).collect();
        let dec = decompose_rir(&buf(v, 16000), 0.0).unwrap();
        assert_eq!(dec.early, vec![1.0]);
        assert_eq!(dec.gain, -2.0);
        assert_eq!(dec.late.len(), 279);
        assert_eq!(dec.pre_peak.len(), 20);
    }

    #[test]
    fn negative_window_rejected() {
        assert!(decompose_rir(&impulse_at(0, 4, 8000), -1.0).is_err());
    }

    #[test]
    fn short_rir_pads_early_segment() {
        let dec = decompose_rir(&buf(vec![0.1, 1.0, 0.5], 16000), 50.0).unwrap();
        assert_eq!(dec.early.len(), 800);
        assert!(dec.late.is_empty());
        assert_eq!(dec.reconstruct(), vec![0.1, 1.0, 0.5]);
    }

    #[test]
    fn record_serializes() {
        let dec = decompose_rir(&buf(vec![0.0, 0.5, 0.25, 0.125], 8000), 0.25).unwrap();
        let json = serde_json::to_value(dec.record()).unwrap();
        assert_eq!(json["n0"], 1);
        assert_eq!(json["gain"], 0.5);
        assert_eq!(json["lengths"]["early"], 2);
        assert_eq!(json["lengths"]["late"], 1);
        assert_eq!(json["lengths"]["pre_peak"], 1);
    }

    #[test]
    fn render_probes() {
        let r: Vec<f64> = (0..50).map(|i| 0.9f64.powi(i)).collect();
        let y = render_reverberant(&impulse_at(0, 30, 16000), &buf(r.clone(), 16000)).unwrap();
        assert_eq!(y.samples(), &r[..30]);
        let s = buf((0..64).map(|i| (i as f64).cos()).collect(), 16000);
        let y = render_reverberant(&s, &impulse_at(0, 1, 16000)).unwrap();
        assert_eq!(y, s);
        assert!(render_reverberant(&s, &impulse_at(0, 1, 8000)).is_err());
    }

    #[test]
    fn shifted_target_is_delayed_copy() {
        let s = buf((0..2000).map(|i| ((i * 7) % 23) as f64 / 23.0).collect(), 48000);
        let dec = decompose_rir(&impulse_at(480, 1000, 48000), 50.0).unwrap();
        let t = make_target(&s, &dec, TargetKind::ShiftedAnechoic).unwrap();
        assert_eq!(t.len(), s.len());
        assert!(t.samples()[..480].iter().all(|&x| x == 0.0));
        assert_eq!(&t.samples()[480..], &s.samples()[..2000 - 480]);
        assert_eq!(make_target(&s, &dec, TargetKind::Anechoic).unwrap(), s);
    }

    #[test]
    fn zero_window_collapses_to_shifted() {
        let s = buf((0..3000).map(|i| (i as f64 * 0.01).sin()).collect(), 16000);
        let r = buf((0..1600).map(|i| if i == 37 { 0.8 } else { 0.3 * (-(i as f64) / 200.0).exp() }).collect(), 16000);
        let dec = decompose_rir(&r, 50.0).unwrap();
        let a = make_target(&s, &dec, TargetKind::ShiftedAnechoic).unwrap();
        let b = make_target(&s, &dec, TargetKind::EarlyReflected { window_ms: 0.0 }).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn target_rate_and_window_checked() {
        let s = buf(vec![1.0; 10], 8000);
        let dec = decompose_rir(&impulse_at(0, 4, 16000), 50.0).unwrap();
        assert!(matches!(
            make_target(&s, &dec, TargetKind::Anechoic),
            Err(Error::RateMismatch(8000, 16000))
        ));
        let dec = decompose_rir(&impulse_at(0, 4, 8000), 50.0).unwrap();
        assert!(make_target(&s, &dec, TargetKind::EarlyReflected { window_ms: 120.0 }).is_err());
    }

    #[test]
    fn target_kind_parsing() {
        assert_eq!("anechoic".parse::<TargetKind>().unwrap(), TargetKind::Anechoic);
        assert_eq!(
            "early_reflected:20".parse::<TargetKind>().unwrap(),
            TargetKind::EarlyReflected { window_ms: 20.0 }
        );
        assert!("early_reflected:200".parse::<TargetKind>().is_err());
        assert!("wet".parse::<TargetKind>().is_err());
    }

    #[test]
    fn alignment_lag_finds_shift() {
        let a: Vec<f64> = (0..200).map(|i| ((i * 13) % 7) as f64 - 3.0).collect();
        let mut b = vec![0.0; 5];
        b.extend_from_slice(&a[..195]);
        assert_eq!(alignment_lag(&b, &a, 20), 5);
        assert_eq!(alignment_lag(&a, &b, 20), -5);
    }
}
