//! Error type shared across the crate.

use std::path::PathBuf;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes of the library.
///
/// The variants map onto the process exit codes used by the CLI:
/// `Input`, `Degenerate` and `Contract` are caller mistakes (exit 1),
/// `Format` is a malformed file (exit 2).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Arguments violate a documented precondition.
    #[error("input error: {0}")]
    Input(String),

    /// Numerically or geometrically degenerate input (zero image, coincident
    /// points, zero-length normal, constant map, ...).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A file could not be parsed. `offset` is the byte position at which
    /// parsing failed, when known.
    #[error("format error{}: {msg}{}", path_label(.path), offset_label(.offset))]
    Format {
        msg: String,
        path: Option<PathBuf>,
        offset: Option<u64>,
    },

    /// A pluggable component (e.g. a denoiser callback) broke its contract.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn degenerate(msg: impl Into<String>) -> Self {
        Error::Degenerate(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format {
            msg: msg.into(),
            path: None,
            offset: None,
        }
    }

    pub fn format_at(msg: impl Into<String>, offset: u64) -> Self {
        Error::Format {
            msg: msg.into(),
            path: None,
            offset: Some(offset),
        }
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    /// Attach a file path to a format error; other variants pass through.
    pub fn with_path(self, p: impl Into<PathBuf>) -> Self {
        match self {
            Error::Format { msg, offset, .. } => Error::Format {
                msg,
                path: Some(p.into()),
                offset,
            },
            other => other,
        }
    }
}

fn path_label(path: &Option<PathBuf>) -> String {
    match path {
        Some(p) => format!(" in {}", p.display()),
        None => String::new(),
    }
}

fn offset_label(offset: &Option<u64>) -> String {
    match offset {
        Some(o) => format!(" (byte offset {o})"),
        None => String::new(),
    }
}
