use std::path::PathBuf;

use thiserror::Error;

use crate::align::Point;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used by the command line front end to pick an exit
/// status.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite value in parameter block `{block}`: {detail}")]
    NonFinite { block: String, detail: String },

    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },

    #[error("corner detection failed: {0}")]
    Detection(String),

    #[error("corner cleaning kept {} corners, expected 20", survivors.len())]
    Cleaning { survivors: Vec<Point> },

    #[error("degenerate point configuration: {0}")]
    Degenerate(String),

    #[error("{0}")]
    Size(String),

    #[error("synthesis failed: {0}")]
    Synthesis(String),

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("image error for {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: ::image::ImageError,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format { what, detail: detail.into() }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) => ErrorClass::Usage,
            Error::NonFinite { .. } | Error::Diverged { .. } => ErrorClass::Numerical,
            _ => ErrorClass::Data,
        }
    }
}
