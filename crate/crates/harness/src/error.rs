use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl HarnessError {
    /// Process exit code: 2 for bad input, 3 for numerical failures, 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Validation(_) => 2,
            HarnessError::Numerical(_) => 3,
            HarnessError::Io(_) => 1,
        }
    }

    pub fn context(self, what: &str) -> Self {
        match self {
            HarnessError::Validation(m) => HarnessError::Validation(format!("{what}: {m}")),
            HarnessError::Numerical(m) => HarnessError::Numerical(format!("{what}: {m}")),
            HarnessError::Io(m) => HarnessError::Io(format!("{what}: {m}")),
        }
    }
}

impl From<gkf_core::Error> for HarnessError {
    fn from(e: gkf_core::Error) -> Self {
        match e {
            gkf_core::Error::Io(io) => HarnessError::Io(io.to_string()),
            e if e.is_validation() => HarnessError::Validation(e.to_string()),
            e => HarnessError::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Io(e.to_string())
    }
}

impl From<csv::Error> for HarnessError {
    fn from(e: csv::Error) -> Self {
        HarnessError::Io(e.to_string())
    }
}
