use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid or incomplete run configuration. The message names the field.
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed numeric input (non-finite components, wrong dimension, ...).
    #[error("input error: {0}")]
    Input(String),

    /// The backward recursion produced non-finite values or blew past the
    /// a priori bound.
    #[error("numerical abort at step {step}: {detail}")]
    NumericalAbort { step: usize, detail: String },

    #[error("capacity error: {0}")]
    Capacity(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("toml parse error: {0}")]
    TomlDe(#[from] toml::de::Error),

    #[error("toml write error: {0}")]
    TomlSer(#[from] toml::ser::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
}

pub(crate) fn ensure_finite(y: &[f64], what: &str) -> Result<()> {
    if let Some(idx) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::input(format!("{what}: component {idx} is not finite")));
    }
    Ok(())
}
