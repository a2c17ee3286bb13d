use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("malformed image header: {0}")]
    MalformedHeader(&'static str),
    #[error("unsupported maxval {0}, only 255 is supported")]
    MaxvalUnsupported(u32),
    #[error("truncated data: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("invalid image dimensions {height}x{width}x{channels}")]
    InvalidDimensions {
        height: usize,
        width: usize,
        channels: usize,
    },
    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize, usize), (usize, usize, usize)),
    #[error("residual {0} outside [-255, 255]")]
    ResidualOutOfRange(i32),

    #[error("unknown base codec id {0}")]
    UnknownCodec(u8),
    #[error("invalid downsample factor {0}, expected 2, 4 or 8")]
    InvalidFactor(u8),
    #[error("base payload length {found} does not match expected {expected}")]
    PayloadLength { expected: usize, found: usize },

    #[error("channel index {0} out of range")]
    ChannelOutOfRange(usize),
    #[error("scale {0} below the minimum")]
    SigmaTooSmall(f64),
    #[error("invalid symbol support [{lo}, {hi}] with stride {stride}")]
    InvalidSupport { lo: i32, hi: i32, stride: i32 },
    #[error("parameter tensor: {0}")]
    Tensor(String),

    #[error("invalid tau {0}")]
    InvalidTau(u32),

    #[error("invalid context model k={k} j={j}")]
    InvalidContextModel { k: u32, j: u32 },
    #[error("patch size {patch} too small for kernel {k}")]
    PatchTooSmall { patch: u32, k: u32 },

    #[error("support of {0} symbols exceeds the coder precision")]
    SupportTooLarge(usize),
    #[error("symbol {0} outside the coding support")]
    SymbolOutsideSupport(i32),
    #[error("coded stream exhausted")]
    StreamExhausted,

    #[error("bad container magic")]
    BadMagic,
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u8),
    #[error("invalid container: {0}")]
    InvalidContainer(&'static str),
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("corrupt container: {0}")]
    CorruptStream(&'static str),
    #[error("container was coded with a parameter tensor, none was supplied")]
    MissingTensor,
}

impl Error {
    /// Whether the error signals damaged or desynchronized coded data.
    pub fn is_integrity_failure(&self) -> bool {
        matches!(
            self,
            Error::ChecksumMismatch { .. } | Error::CorruptStream(_) | Error::StreamExhausted
        )
    }
}
