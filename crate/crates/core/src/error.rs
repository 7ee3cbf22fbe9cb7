use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the simulator and its tooling.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid lattice dimensions L={l}, M={m}: {reason}")]
    InvalidDims { l: usize, m: usize, reason: &'static str },

    #[error("fraction_A must lie in [0, 1], got {0}")]
    InvalidFraction(f64),

    #[error("non-finite interaction parameter {name} = {value}")]
    NonFinite { name: &'static str, value: f64 },

    #[error("lattice {l}x{m} has no seven-site domain coverage; nearest valid size is {suggested_l}x{suggested_m}")]
    NoCoverage {
        l: usize,
        m: usize,
        suggested_l: usize,
        suggested_m: usize,
    },

    #[error("decomposition offset must be in 0..7, got {0}")]
    InvalidOffset(usize),

    #[error("lattice holds a single species; no opposite-type partner exists")]
    SingleSpecies,

    #[error("empty cluster size distribution")]
    EmptyDistribution,

    #[error("image of {width}x{height} pixels: {reason}")]
    InvalidImage {
        width: usize,
        height: usize,
        reason: &'static str,
    },

    #[error("line {line}: {reason}")]
    MalformedFrame { line: usize, reason: String },

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) trait IoContext<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T>;
}

impl<T> IoContext<T> for std::io::Result<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T> {
        self.map_err(|source| Error::Io {
            path: path.into(),
            source,
        })
    }
}
