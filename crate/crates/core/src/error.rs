use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the detectors, the state-evolution engine and the harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("detector diverged at iteration {iter}")]
    Diverged {
        iter: usize,
        /// Decoupled-variance estimates up to the last finite iteration.
        trajectory: Vec<f64>,
    },

    #[error("detector error: {0}")]
    Detector(String),

    #[error("box solver did not converge after {iters} iterations (projected-gradient norm {residual:e})")]
    NotConverged {
        iters: usize,
        residual: f64,
        iterate: Vec<num_complex::Complex64>,
    },

    #[error("analysis error: {0}")]
    Analysis(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn analysis(msg: impl Into<String>) -> Self {
        Error::Analysis(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
