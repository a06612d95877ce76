//! Error types shared across the toolkit.
//!
//! Exit-code mapping for the CLI is part of the contract: validation and
//! contract violations exit 1, adapter/external failures exit 2.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input document (JSON syntax).
    #[error("parse error at line {line}, column {column} (byte offset {offset}): {message}")]
    Parse {
        line: usize,
        column: usize,
        offset: usize,
        message: String,
    },

    /// Structurally valid input violating a documented invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// A reference (image_id, category_id) that does not resolve.
    #[error("referential error: {0}")]
    Referential(String),

    /// A precondition of an operation was violated by the caller.
    #[error("contract error: {0}")]
    Contract(String),

    /// External inference adapter failed (nonzero exit, timeout, bad output).
    #[error("adapter error: {message}{}", if .diagnostics.is_empty() { String::new() } else { format!("\n--- diagnostics ---\n{}", .diagnostics) })]
    Adapter { message: String, diagnostics: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn referential(msg: impl Into<String>) -> Self {
        Error::Referential(msg.into())
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn adapter(message: impl Into<String>, diagnostics: impl Into<String>) -> Self {
        Error::Adapter {
            message: message.into(),
            diagnostics: diagnostics.into(),
        }
    }

    /// Stable process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. }
            | Error::Validation(_)
            | Error::Referential(_)
            | Error::Contract(_) => 1,
            Error::Adapter { .. } | Error::Io(_) | Error::Image(_) => 2,
        }
    }

    /// Build a `Parse` error from a serde_json error, recovering the byte
    /// offset of the failure point within `input`.
    pub fn from_json(err: &serde_json::Error, input: &str) -> Self {
        let line = err.line().max(1);
        let column = err.column().max(1);
        let offset = input
            .split_inclusive('\n')
            .take(line - 1)
            .map(str::len)
            .sum::<usize>()
            + (column - 1);
        Error::Parse {
            line,
            column,
            offset,
            message: err.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
