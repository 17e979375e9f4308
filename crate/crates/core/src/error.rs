use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid tree spec: {0}")]
    Spec(String),

    #[error("size cap exceeded: {what} needs {needed}, cap is {cap}")]
    Size {
        what: &'static str,
        needed: u128,
        cap: usize,
    },

    #[error("unknown vertex {0}")]
    Lookup(String),

    #[error("out of range: {0}")]
    Range(String),

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("consistency check failed: {0}")]
    Consistency(String),

    #[error("bad input: {0}")]
    Input(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code: 1 for caller mistakes, 2 when the mathematics did
    /// not check out.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical(_) | Error::Consistency(_) => 2,
            _ => 1,
        }
    }

    pub(crate) fn dim(what: &'static str, expected: usize, got: usize) -> Self {
        Error::Dimension {
            what,
            expected,
            got,
        }
    }
}
