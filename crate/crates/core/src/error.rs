use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the crate.
///
/// Every variant maps to a short machine-readable [`Error::kind`] tag so
/// front ends can print `error[kind]: message` lines.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("{0}")]
    Domain(String),

    /// A density description is malformed (bad tiling, bad parameters).
    #[error("malformed density: {0}")]
    Structural(String),

    /// The model violates every convergence hypothesis and was not force-accepted.
    #[error(
        "model `{model}` failed validation ({reason}); pass force-accept to evaluate it anyway"
    )]
    Unvalidated { model: String, reason: String },

    /// Invalid experiment configuration.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A partition block carries no probability mass, so it cannot be tilted.
    #[error("degenerate block [{start}, {end}): model mass is zero")]
    DegenerateBlock { start: f64, end: f64 },

    /// Requested dyadic depth exceeds the occupancy-limited maximum.
    #[error("dyadic depth {requested} exceeds the maximum depth {max} for this layer")]
    Depth { requested: u32, max: u32 },

    /// A composed transport stage does not match masses.
    #[error("certification failure: {0}")]
    Certification(String),

    /// A persisted file carries the wrong schema.
    #[error("schema mismatch in {path}: expected `{expected}`, found `{found}`")]
    Schema {
        path: PathBuf,
        expected: String,
        found: String,
    },

    /// I/O failure, tagged with the path involved.
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short stable tag for the error category.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Structural(_) => "structural",
            Error::Unvalidated { .. } => "unvalidated",
            Error::Config(_) => "config",
            Error::DegenerateBlock { .. } => "degenerate-block",
            Error::Depth { .. } => "depth",
            Error::Certification(_) => "certification",
            Error::Schema { .. } => "schema",
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
            Error::Parse { .. } => "parse",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
