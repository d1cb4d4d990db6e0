use thiserror::Error;

/// Errors produced by the tracking library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate affine state (non-invertible warp): {0}")]
    DegenerateAffine(String),

    #[error("empty particle set")]
    EmptyParticles,

    #[error("k = {k} out of range for {len} particles")]
    KOutOfRange { k: usize, len: usize },

    #[error("zero vector has no direction: {0}")]
    ZeroVector(String),

    #[error("invalid image data: {0}")]
    InvalidImage(String),

    #[error("initial box {0} does not lie inside the frame")]
    BoxOutsideFrame(String),
}

pub type Result<T> = std::result::Result<T, Error>;
