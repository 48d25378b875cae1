use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the domain of a mathematical function.
    #[error("domain error: {0}")]
    Domain(String),
    /// One or more parameter invariants were violated. Every violation is listed.
    #[error("validation failed:\n  - {}", .0.join("\n  - "))]
    Validation(Vec<String>),
    /// Input text could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),
    /// A pipeline stage could not produce a result.
    #[error("{0}")]
    Runtime(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// True for errors caused by bad user input (exit code 1 in the CLI).
    pub fn is_user_error(&self) -> bool {
        matches!(self, Error::Validation(_) | Error::Parse(_) | Error::Domain(_))
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Collects invariant violations so they can be reported together.
#[derive(Debug, Default)]
pub(crate) struct Violations(Vec<String>);

impl Violations {
    pub(crate) fn check(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        if !ok {
            self.0.push(msg());
        }
    }

    pub(crate) fn extend(&mut self, other: Violations) {
        self.0.extend(other.0);
    }

    pub(crate) fn into_result(self) -> Result<()> {
        if self.0.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(self.0))
        }
    }
}
