use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("I/O error on {path:?}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("WAV error: {0}")]
    Wav(String),
    #[error("unsupported WAV encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("expected a mono file, found {0} channels")]
    ChannelCount(u16),
    #[error("sampling rate mismatch: {0} Hz vs {1} Hz")]
    RateMismatch(u32, u32),
    #[error("unsupported sampling rate {0} Hz")]
    UnsupportedRate(u32),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("all-zero impulse response")]
    ZeroRir,
    #[error("zero energy in {0}")]
    ZeroEnergy(&'static str),
    #[error("unknown asset {0:?}")]
    UnknownAsset(String),
    #[error("{path}:{line}: {reason}")]
    Parse {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("undefined correlation: {0} residual has zero variance")]
    ZeroVariance(&'static str),
    #[error("invalid distribution: {0}")]
    Distribution(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("residual identity violated at cell {0}")]
    ResidualIdentity(usize),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for failures caused by the filesystem rather than by the inputs'
    /// content.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}
