use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use serde::{Deserialize, Serialize};

use super::AudioBuffer;
use crate::error::{Error, Result};

/// On-disk sample encoding for [`write_wav`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WavEncoding {
    Pcm16,
    Pcm24,
    Float32,
}

impl std::str::FromStr for WavEncoding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pcm16" => Ok(Self::Pcm16),
            "pcm24" => Ok(Self::Pcm24),
            "float32" => Ok(Self::Float32),
            other => Err(Error::param("encoding", format!("unknown encoding {other:?}"))),
        }
    }
}

/// Outcome of a write: how many samples fell outside [-1, 1] and were
/// clamped before integer encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct WriteReport {
    pub clamped: usize,
}

fn wav_err(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::io(path, io),
        hound::Error::Unsupported => Error::UnsupportedEncoding("unsupported WAV feature".into()),
        other => Error::Wav(format!("{}: {other}", path.display())),
    }
}

/// Reads a mono PCM-16, PCM-24 or IEEE float32 WAV file. Integer codes are
/// divided by 2^(bits-1), so the result lies in [-1, 1).
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let path = path.as_ref();
    let reader = WavReader::open(path).map_err(|e| wav_err(path, e))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::ChannelCount(spec.channels));
    }
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, bits @ (16 | 24)) => {
            let scale = (1u32 << (bits - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| wav_err(path, e))?
        }
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| wav_err(path, e))?,
        (fmt, bits) => {
            return Err(Error::UnsupportedEncoding(format!("{fmt:?} with {bits} bits")));
        }
    };
    AudioBuffer::new(samples, spec.sample_rate)
}

fn quantize(x: f64, bits: u32) -> i32 {
    let full = (1i64 << (bits - 1)) as f64;
    (x * full).round().clamp(-full, full - 1.0) as i32
}

/// Writes `buf` as a mono WAV file. Float32 storage is lossless for samples
/// that are exactly representable in f32.
pub fn write_wav(buf: &AudioBuffer, path: impl AsRef<Path>, encoding: WavEncoding) -> Result<WriteReport> {
    let path = path.as_ref();
    let (bits, format) = match encoding {
        WavEncoding::Pcm16 => (16, SampleFormat::Int),
        WavEncoding::Pcm24 => (24, SampleFormat::Int),
        WavEncoding::Float32 => (32, SampleFormat::Float),
    };
    let spec = WavSpec {
        channels: 1,
        sample_rate: buf.fs(),
        bits_per_sample: bits,
        sample_format: format,
    };
    let mut writer = WavWriter::create(path, spec).map_err(|e| wav_err(path, e))?;
    let mut report = WriteReport::default();
    for &x in buf.samples() {
        match encoding {
            WavEncoding::Float32 => writer.write_sample(x as f32),
            _ => {
                if x.abs() > 1.0 {
                    report.clamped += 1;
                }
                writer.write_sample(quantize(x.clamp(-1.0, 1.0), bits as u32))
            }
        }
        .map_err(|e| wav_err(path, e))?;
    }
    writer.finalize().map_err(|e| wav_err(path, e))?;
    Ok(report)
}
