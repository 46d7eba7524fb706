use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::AudioBuffer;
use crate::error::{Error, Result};

/// Output length policy for [`convolve`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvolveMode {
    /// N + M - 1 samples.
    Full,
    /// The first N samples, so the output lines up with the input signal.
    TrimToSignal,
}

// Below this kernel length direct summation is both faster and exact for
// trivial kernels (a unit impulse reproduces the input bit for bit).
const DIRECT_MAX: usize = 32;

/// Linear convolution of two buffers at the same rate.
pub fn convolve(signal: &AudioBuffer, kernel: &AudioBuffer, mode: ConvolveMode) -> Result<AudioBuffer> {
    if signal.is_empty() || kernel.is_empty() {
        return Err(Error::Empty("convolution operand"));
    }
    signal.ensure_same_rate(kernel)?;
    let out_len = match mode {
        ConvolveMode::Full => signal.len() + kernel.len() - 1,
        ConvolveMode::TrimToSignal => signal.len(),
    };
    let mut out = convolve_slices(signal.samples(), kernel.samples());
    out.truncate(out_len);
    Ok(AudioBuffer::from_parts(out, signal.fs()))
}

/// Full linear convolution of two non-empty slices.
pub(crate) fn convolve_slices(a: &[f64], b: &[f64]) -> Vec<f64> {
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    if short.len() <= DIRECT_MAX {
        direct(long, short)
    } else {
        overlap_add(long, short)
    }
}

fn direct(x: &[f64], h: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len() + h.len() - 1];
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        for (j, &hj) in h.iter().enumerate() {
            out[i + j] += xi * hj;
        }
    }
    out
}

fn overlap_add(x: &[f64], h: &[f64]) -> Vec<f64> {
    let m = h.len();
    let total = x.len() + m - 1;
    // Block FFT size: at least twice the kernel, capped by the full output.
    let fft_len = (2 * m).next_power_of_two().min(total.next_power_of_two());
    let block = fft_len - m + 1;

    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(fft_len);
    let inv = planner.plan_fft_inverse(fft_len);

    let mut kernel_spec: Vec<Complex64> = h.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    kernel_spec.resize(fft_len, Complex64::new(0.0, 0.0));
    fwd.process(&mut kernel_spec);

    let scale = 1.0 / fft_len as f64;
    let mut out = vec![0.0; total];
    let mut buf = vec![Complex64::new(0.0, 0.0); fft_len];
    for start in (0..x.len()).step_by(block) {
        let end = (start + block).min(x.len());
        for (slot, v) in buf.iter_mut().zip(x[start..end].iter().copied().chain(std::iter::repeat(0.0))) {
            *slot = Complex64::new(v, 0.0);
        }
        fwd.process(&mut buf);
        for (b, k) in buf.iter_mut().zip(&kernel_spec) {
            *b *= k;
        }
        inv.process(&mut buf);
        let span = (end - start + m - 1).min(total - start);
        for (o, b) in out[start..start + span].iter_mut().zip(&buf) {
            *o += b.re * scale;
        }
    }
    out
}
