use super::AudioBuffer;
use crate::dsp::{kaiser, sinc};
use crate::error::{Error, Result};

const HALF_TAPS: i64 = 32;
const KAISER_BETA: f64 = 8.6;
const CUTOFF_FRACTION: f64 = 0.95;
// Largest interpolation factor for which per-phase filters are tabulated.
const MAX_TABLE_PHASES: u64 = 4096;

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

struct PhaseFilter {
    cutoff: f64,
}

impl PhaseFilter {
    /// Taps for input offsets -31..=32 around the base index, for an output
    /// position `frac` samples past the base. Normalized to unit DC gain.
    fn taps(&self, frac: f64) -> [f64; 64] {
        let mut h = [0.0; 64];
        let mut sum = 0.0;
        for (slot, j) in h.iter_mut().zip(-HALF_TAPS + 1..=HALF_TAPS) {
            let tau = j as f64 - frac;
            let v = 2.0 * self.cutoff * sinc(2.0 * self.cutoff * tau) * kaiser(tau / HALF_TAPS as f64, KAISER_BETA);
            *slot = v;
            sum += v;
        }
        for v in &mut h {
            *v /= sum;
        }
        h
    }
}

/// Rational-ratio windowed-sinc resampler (Kaiser, beta 8.6, 64 taps per
/// phase, cutoff at 0.95 of the lower Nyquist frequency). Output length is
/// round(N * target_fs / fs).
pub fn resample(buf: &AudioBuffer, target_fs: u32) -> Result<AudioBuffer> {
    if target_fs == 0 {
        return Err(Error::param("target_fs", "must be positive"));
    }
    if target_fs == buf.fs() {
        return Ok(buf.clone());
    }
    let fs_in = buf.fs() as u64;
    let fs_out = target_fs as u64;
    let g = gcd(fs_in, fs_out);
    let up = fs_out / g;
    let down = fs_in / g;

    let n_in = buf.len();
    let n_out = ((n_in as f64) * fs_out as f64 / fs_in as f64).round() as usize;
    let filter = PhaseFilter {
        cutoff: CUTOFF_FRACTION * 0.5 * (fs_in.min(fs_out) as f64) / fs_in as f64,
    };
    let table: Option<Vec<[f64; 64]>> = (up <= MAX_TABLE_PHASES)
        .then(|| (0..up).map(|p| filter.taps(p as f64 / up as f64)).collect());

    let x = buf.samples();
    let mut out = Vec::with_capacity(n_out);
    for k in 0..n_out as u64 {
        let pos = k * down;
        let base = (pos / up) as i64;
        let phase = pos % up;
        let owned;
        let h = match &table {
            Some(t) => &t[phase as usize],
            None => {
                owned = filter.taps(phase as f64 / up as f64);
                &owned
            }
        };
        let mut acc = 0.0;
        for (tap, j) in h.iter().zip(-HALF_TAPS + 1..=HALF_TAPS) {
            let idx = base + j;
            if idx >= 0 && (idx as usize) < n_in {
                acc += tap * x[idx as usize];
            }
        }
        out.push(acc);
    }
    Ok(AudioBuffer::from_parts(out, target_fs))
}
