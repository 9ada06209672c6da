use std::fmt;

use tirank::corpus::CorpusError;
use tirank::metrics::MetricsError;
use tirank::oracle::OracleError;
use tirank::retrieval::RetrievalError;
use tirank::thi::ThiError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    /// Bad flags, config or input data. Exit code 1.
    Validation,
    /// I/O, transport or oracle failures. Exit code 2.
    Runtime,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        Self { kind: Kind::Validation, message: message.into() }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self { kind: Kind::Runtime, message: message.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            Kind::Validation => 1,
            Kind::Runtime => 2,
        }
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        Self::runtime(format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.kind {
            Kind::Validation => "validation",
            Kind::Runtime => "runtime",
        };
        write!(f, "error[{tag}]: {}", self.message)
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        let kind = if e.is_validation() { Kind::Validation } else { Kind::Runtime };
        Self { kind, message: e.to_string() }
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        let kind = match e {
            OracleError::Template(_) | OracleError::Unsupported { .. } => Kind::Validation,
            _ => Kind::Runtime,
        };
        Self { kind, message: e.to_string() }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        Self::validation(e.to_string())
    }
}

impl From<RetrievalError> for CliError {
    fn from(e: RetrievalError) -> Self {
        Self::validation(e.to_string())
    }
}

impl From<ThiError> for CliError {
    fn from(e: ThiError) -> Self {
        match e {
            ThiError::ThreadPool(m) => Self::runtime(m),
            other => Self::validation(other.to_string()),
        }
    }
}
