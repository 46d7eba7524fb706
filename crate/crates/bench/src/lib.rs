//! Fixtures shared by the criterion benches.
use uspeech_core::audio::derive_stream;
use uspeech_core::AudioBuffer;

/// Deterministic white noise of `len` samples.
pub fn noise(len: usize, fs: u32, seed: u64) -> AudioBuffer {
    let mut st = derive_stream(seed, "bench");
    AudioBuffer::new((0..len).map(|_| 0.1 * st.normal()).collect(), fs).unwrap()
}
