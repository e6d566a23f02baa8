use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImageError {
    #[error("image has a zero dimension")]
    EmptyImage,
    #[error("expected {expected} samples, got {actual}")]
    SampleCount { expected: usize, actual: usize },
    #[error("block size must be at least 2, got {0}")]
    BlockSize(usize),
    #[error("expected {expected} blocks, got {actual}")]
    BlockCount { expected: usize, actual: usize },
    #[error("expected blocks of {expected} samples, got {actual}")]
    BlockLength { expected: usize, actual: usize },
    #[error("crop region exceeds the padded plane")]
    CropOutOfBounds,
    #[error("image dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PgmError {
    #[error("not a PNM file")]
    BadMagic,
    #[error("only binary PGM (P5) is supported")]
    UnsupportedFormat,
    #[error("malformed PGM header: bad {0}")]
    MalformedHeader(&'static str),
    #[error("unsupported PGM maxval {0}, expected 255")]
    UnsupportedMaxval(usize),
    #[error("truncated PGM payload: expected {expected} bytes, got {actual}")]
    TruncatedPayload { expected: usize, actual: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SensingError {
    #[error("subrate must lie in (0, 1], got {0}")]
    InvalidSubrate(f64),
    #[error("block size must be at least 2, got {0}")]
    BlockSize(usize),
    #[error("measurement count {rows} must lie in 1..={cols}")]
    MeasurementCount { rows: usize, cols: usize },
    #[error("rank-deficient Gaussian draw for seed {seed} after {attempts} attempts")]
    Degenerate { seed: u64, attempts: u32 },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StreamError {
    #[error("bad stream magic")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u8),
    #[error("unsupported matrix generator version {0}")]
    UnsupportedGenerator(u8),
    #[error("invalid header field: {0}")]
    InvalidHeader(&'static str),
    #[error("stream truncated inside the header")]
    TruncatedHeader,
    #[error("stream truncated in block {block}")]
    Truncated { block: usize },
    #[error("unexpected data after the last block")]
    TrailingData,
    #[error("index {value} in block {block} exceeds the codable range")]
    IndexOverflow { block: usize, value: i64 },
    #[error("block {block}: expected {expected} indices, got {actual}")]
    IndexCount {
        block: usize,
        expected: usize,
        actual: usize,
    },
    #[error("expected {expected} blocks, got {actual}")]
    BlockCount { expected: usize, actual: usize },
    #[error("block {block}: mode flag presence does not match the header policy")]
    PolicyMismatch { block: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("quantizer step must be finite and positive, got {0}")]
    InvalidStep(f64),
    #[error("non-finite residual component {component}")]
    NonFinite { component: usize },
    #[error("quantizer index overflow at component {component}")]
    IndexOverflow { component: usize },
    #[error("block {block}: mode {code} is not an available candidate")]
    ModeUnavailable { block: usize, code: u8 },
    #[error("grid has {actual} reconstructed blocks, expected {expected}")]
    IncompleteGrid { expected: usize, actual: usize },
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Sensing(#[from] SensingError),
    #[error(transparent)]
    Stream(#[from] StreamError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RecoveryError {
    #[error("invalid recovery configuration: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Sensing(#[from] SensingError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RateError {
    #[error("no quantizer indices to estimate")]
    Empty,
    #[error("image pixel count must be positive")]
    NoPixels,
}

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("vector lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("stream carries {payload_bits} index bits, below the entropy bound {entropy_bits}")]
    RateBound {
        payload_bits: f64,
        entropy_bits: f64,
    },
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Recovery(#[from] RecoveryError),
    #[error(transparent)]
    Rate(#[from] RateError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
