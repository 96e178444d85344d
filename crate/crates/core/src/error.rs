use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{0} is not a prime field order")]
    NotPrime(u64),

    #[error("field mismatch: F_{left} vs F_{right}")]
    FieldMismatch { left: u32, right: u32 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("entry {value} is out of range for F_{q}")]
    EntryOutOfRange { value: u64, q: u32 },

    #[error("factor matrix does not have full column rank")]
    NotFullColumnRank,

    #[error("column space of the dividend is not contained in that of the divisor")]
    NotInSpan,

    #[error("{what} needs {needed} items, budget is {limit}")]
    Budget {
        what: &'static str,
        needed: String,
        limit: u64,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("no convergence after {iterations} iterations (gap {gap:e})")]
    NotConverged { iterations: usize, gap: f64 },

    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn budget(what: &'static str, needed: impl ToString, limit: u64) -> Self {
        Error::Budget {
            what,
            needed: needed.to_string(),
            limit,
        }
    }
}
