//! Sampling-frequency-independent STFT.
//!
//! The analysis window is always 40 ms (320 samples at 8 kHz, scaled with the
//! rate), the hop is half a window and both analysis and synthesis use a
//! periodic square-root Hann window, so overlap-add reconstruction is exact
//! and the frame count depends only on the signal duration.

mod bands;
mod io;

pub use bands::{band_partition, Band, BandPartition, DEFAULT_BAND_WIDTH_HZ};
pub use io::{decode_grid, encode_grid, read_grid, write_grid, GRID_MAGIC};

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};

/// Window length at 8 kHz; every other rate scales proportionally.
pub const BASE_WINDOW: u32 = 320;
pub const BASE_RATE: u32 = 8000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SfiParams {
    pub fs: u32,
    pub win_len: usize,
    pub hop_len: usize,
    pub n_bins: usize,
}

impl SfiParams {
    /// Transform geometry for `fs`. Fails when the 40 ms window or its half
    /// is not a whole number of samples.
    pub fn for_rate(fs: u32) -> Result<Self> {
        let scaled = BASE_WINDOW as u64 * fs as u64;
        if fs == 0 || !scaled.is_multiple_of(2 * BASE_RATE as u64) {
            return Err(Error::UnsupportedRate(fs));
        }
        let win_len = (scaled / BASE_RATE as u64) as usize;
        Ok(Self {
            fs,
            win_len,
            hop_len: win_len / 2,
            n_bins: win_len / 2 + 1,
        })
    }

    /// Bin spacing in Hz (25 Hz at every rate).
    pub fn bin_hz(&self) -> f64 {
        self.fs as f64 / self.win_len as f64
    }

    /// Frames produced for a signal of `len` samples.
    pub fn frame_count(&self, len: usize) -> usize {
        1 + len.div_ceil(self.hop_len)
    }

    pub fn window(&self) -> Vec<f64> {
        let n = self.win_len as f64;
        (0..self.win_len)
            .map(|i| (0.5 - 0.5 * (2.0 * PI * i as f64 / n).cos()).sqrt())
            .collect()
    }
}

pub fn sfi_params(fs: u32) -> Result<SfiParams> {
    SfiParams::for_rate(fs)
}

/// Complex time-frequency grid, stored frame-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrogramFrameGrid {
    params: SfiParams,
    original_length: usize,
    n_frames: usize,
    data: Vec<Complex64>,
}

impl SpectrogramFrameGrid {
    pub fn new(params: SfiParams, original_length: usize, n_frames: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != n_frames * params.n_bins {
            return Err(Error::Shape(format!(
                "{} values for {} frames x {} bins",
                data.len(),
                n_frames,
                params.n_bins
            )));
        }
        if let Some(i) = data.iter().position(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self {
            params,
            original_length,
            n_frames,
            data,
        })
    }

    pub fn zeros(params: SfiParams, original_length: usize) -> Self {
        let n_frames = params.frame_count(original_length);
        Self {
            params,
            original_length,
            n_frames,
            data: vec![Complex64::new(0.0, 0.0); n_frames * params.n_bins],
        }
    }

    pub fn params(&self) -> SfiParams {
        self.params
    }

    pub fn original_length(&self) -> usize {
        self.original_length
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_bins(&self) -> usize {
        self.params.n_bins
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn frame(&self, f: usize) -> &[Complex64] {
        let b = self.params.n_bins;
        &self.data[f * b..(f + 1) * b]
    }

    pub fn get(&self, frame: usize, bin: usize) -> Complex64 {
        self.data[frame * self.params.n_bins + bin]
    }

    pub fn set(&mut self, frame: usize, bin: usize, v: Complex64) {
        let b = self.params.n_bins;
        self.data[frame * b + bin] = v;
    }

    /// Magnitudes of one bin across all frames.
    pub fn bin_magnitudes(&self, bin: usize) -> Vec<f64> {
        (0..self.n_frames).map(|f| self.get(f, bin).norm()).collect()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.params == other.params && self.n_frames == other.n_frames
    }

    /// Energy of frame `f` in the time domain, recovered from its one-sided
    /// spectrum.
    pub fn frame_energy(&self, f: usize) -> f64 {
        let frame = self.frame(f);
        let last = frame.len() - 1;
        let interior: f64 = frame[1..last].iter().map(|c| c.norm_sqr()).sum();
        (frame[0].norm_sqr() + frame[last].norm_sqr() + 2.0 * interior) / self.params.win_len as f64
    }

    /// Checks that the frame count matches the original length.
    pub fn validate(&self) -> Result<()> {
        let expected = self.params.frame_count(self.original_length);
        if self.n_frames != expected {
            return Err(Error::Shape(format!(
                "{} frames for a {}-sample signal, expected {expected}",
                self.n_frames, self.original_length
            )));
        }
        if self.data.len() != self.n_frames * self.params.n_bins {
            return Err(Error::Shape("data length disagrees with grid size".into()));
        }
        Ok(())
    }
}

/// Windowed time-domain analysis frames: reflection-padded by half a window
/// at the start, reflection-padded then zero-filled at the end.
pub fn analysis_frames(buf: &AudioBuffer) -> Result<(SfiParams, Vec<Vec<f64>>)> {
    let params = SfiParams::for_rate(buf.fs())?;
    let n = buf.len();
    if n < params.win_len {
        return Err(Error::param(
            "input",
            format!("{n} samples is shorter than the {}-sample window", params.win_len),
        ));
    }
    let hop = params.hop_len;
    let x = buf.samples();
    let n_frames = params.frame_count(n);
    let padded_len = (n_frames - 1) * hop + params.win_len;
    let mut padded = Vec::with_capacity(padded_len);
    padded.extend((1..=hop).rev().map(|i| x[i]));
    padded.extend_from_slice(x);
    padded.extend((0..hop).map(|j| x[n - 2 - j]));
    padded.resize(padded_len, 0.0);

    let window = params.window();
    let frames = (0..n_frames)
        .map(|f| {
            padded[f * hop..f * hop + params.win_len]
                .iter()
                .zip(&window)
                .map(|(a, w)| a * w)
                .collect()
        })
        .collect();
    Ok((params, frames))
}

pub fn stft(buf: &AudioBuffer) -> Result<SpectrogramFrameGrid> {
    let (params, frames) = analysis_frames(buf)?;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(params.win_len);
    let mut data = Vec::with_capacity(frames.len() * params.n_bins);
    let mut scratch = vec![Complex64::new(0.0, 0.0); params.win_len];
    for frame in &frames {
        for (s, &v) in scratch.iter_mut().zip(frame) {
            *s = Complex64::new(v, 0.0);
        }
        fft.process(&mut scratch);
        data.extend_from_slice(&scratch[..params.n_bins]);
    }
    Ok(SpectrogramFrameGrid {
        params,
        original_length: buf.len(),
        n_frames: frames.len(),
        data,
    })
}

pub fn istft(grid: &SpectrogramFrameGrid) -> Result<AudioBuffer> {
    grid.validate()?;
    let p = grid.params;
    let win = p.win_len;
    let hop = p.hop_len;
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(win);
    let window = p.window();
    let mut out = vec![0.0; (grid.n_frames - 1) * hop + win];
    let mut scratch = vec![Complex64::new(0.0, 0.0); win];
    for f in 0..grid.n_frames {
        let frame = grid.frame(f);
        scratch[0] = Complex64::new(frame[0].re, 0.0);
        scratch[win / 2] = Complex64::new(frame[win / 2].re, 0.0);
        for k in 1..win / 2 {
            scratch[k] = frame[k];
            scratch[win - k] = frame[k].conj();
        }
        ifft.process(&mut scratch);
        for (i, (s, w)) in scratch.iter().zip(&window).enumerate() {
            out[f * hop + i] += s.re / win as f64 * w;
        }
    }
    let samples = out[hop..hop + grid.original_length].to_vec();
    Ok(AudioBuffer::from_parts(samples, p.fs))
}
