use std::fmt;

use thiserror::Error;

/// Which side of a mastered/injection split came out empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitSide {
    Mastered,
    Injection,
}

impl fmt::Display for SplitSide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitSide::Mastered => f.write_str("mastered"),
            SplitSide::Injection => f.write_str("injection"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("non-finite loss at sample {index}")]
    NonFiniteLoss { index: usize },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("degenerate split: {side} set is empty")]
    DegenerateSplit { side: SplitSide },

    #[error("degenerate input: need at least 3 negative-similarity samples, found {count}")]
    TooFewNegatives { count: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("training aborted at epoch {epoch}: {source}")]
    Aborted {
        epoch: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("malformed file: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// True for errors caused by non-finite arithmetic, including aborted runs
    /// whose root cause was numerical.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NonFiniteLoss { .. } | Error::Numerical(_) => true,
            Error::Aborted { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected, found })
    }
}
