use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("duplicate frame: t = {t} snaps to grid index {index} already occupied")]
    DuplicateFrame { t: f64, index: i64 },

    #[error("series too short: length {len} does not support order {order}")]
    SeriesTooShort { len: usize, order: usize },

    #[error("invalid fragment {id}: {reason}")]
    InvalidFragment { id: String, reason: String },

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("watermark violation: fragment {id} ends at {t_end} but watermark is {watermark}")]
    WatermarkViolation { id: String, t_end: f64, watermark: f64 },

    #[error(
        "solver did not converge after {iterations} iterations \
         (primal {primal:.3e}, dual {dual:.3e}, gap {gap:.3e})"
    )]
    NonConvergence { iterations: usize, primal: f64, dual: f64, gap: f64 },

    #[error("no ground truth")]
    NoGroundTruth,

    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("image: {0}")]
    Image(#[from] image::ImageError),

    #[error("pipeline aborted: {0}")]
    Pipeline(String),

    #[error("internal invariant breached: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
