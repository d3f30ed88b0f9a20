use thiserror::Error;

use crate::geometry::Pixel;

/// Errors produced by the geometric, loss, and I/O routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("center pixel {0} is invalid")]
    InvalidCenter(Pixel),

    #[error("degenerate patch: {count} valid entries, need at least 3")]
    DegeneratePatch { count: usize },

    #[error("degenerate triplet: points are colinear")]
    DegenerateTriplet,

    #[error("pixel {pixel} is unrecoverable: {reason}")]
    UnrecoverablePixel { pixel: Pixel, reason: &'static str },

    #[error("total candidate weight {0:e} is below 1e-12")]
    ZeroWeight(f64),

    #[error("insufficient support around pixel {0}")]
    InsufficientSupport(Pixel),

    #[error("rank-deficient point set")]
    RankDeficient,

    #[error("candidate normals average to zero")]
    ZeroMean,

    #[error("no overlapping valid pixels")]
    NoOverlap,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("out of range: {0}")]
    Range(String),

    #[error("pfm: {0}")]
    Pfm(#[from] PfmError),

    #[error("{0}")]
    Intrinsics(String),

    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

/// Portable float map parse failures, each naming the offending field.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum PfmError {
    #[error("bad magic {0:?}")]
    BadMagic(String),
    #[error("bad {field}: {value:?}")]
    BadDimension { field: &'static str, value: String },
    #[error("bad scale: {0:?}")]
    BadScale(String),
    #[error("missing header field {0}")]
    MissingField(&'static str),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("non-finite sample at index {0}")]
    NonFiniteSample(usize),
    #[error("unsupported channel count {0}")]
    Channels(usize),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
