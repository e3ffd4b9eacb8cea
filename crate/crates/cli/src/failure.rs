use std::path::Path;

/// A failed command and the process exit code it maps to.
#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Degenerate(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Io(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Degenerate(_) => 3,
            Failure::Numerical(_) => 4,
            Failure::Io(_) => 5,
        }
    }

    /// Maps a library error, prefixing `context` (such as the seed and arm).
    pub fn from_lib(context: &str, err: cnl::Error) -> Self {
        let msg = if context.is_empty() {
            err.to_string()
        } else {
            format!("{context}: {err}")
        };
        let root = match &err {
            cnl::Error::Aborted { source, .. } => source.as_ref(),
            other => other,
        };
        match root {
            cnl::Error::DegenerateSplit { .. } => Failure::Degenerate(msg),
            e if e.is_numerical() => Failure::Numerical(msg),
            cnl::Error::Io(_) | cnl::Error::Format(_) => Failure::Io(msg),
            _ => Failure::Config(msg),
        }
    }

    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        Failure::Io(format!("{}: {err}", path.display()))
    }
}
