use std::path::PathBuf;

/// Errors produced by the tracking pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("no files matching `{pattern}` in {}", dir.display())]
    NoMatch { dir: PathBuf, pattern: String },

    #[error("failed to decode {}: {reason}", path.display())]
    Decode { path: PathBuf, reason: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("need at least {needed} frames, got {got}")]
    TooFewFrames { needed: usize, got: usize },

    #[error("empty pixel cluster")]
    EmptyCluster,

    #[error("empty point set")]
    EmptyInput,

    #[error("empty silhouette")]
    EmptySilhouette,

    #[error("empty mask")]
    EmptyMask,

    #[error("empty rectangle")]
    EmptyRect,

    #[error("degenerate person width {0} (need at least 2 px)")]
    DegenerateWidth(f64),

    #[error("degenerate contour with {0} points")]
    DegenerateContour(usize),

    #[error("histogram is not normalized (sum = {0})")]
    UnnormalizedHistogram(f64),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
