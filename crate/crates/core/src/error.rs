use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input. `record` is a 1-based line or record number when known.
    #[error("{source_name}: parse error{}: {message}", record.map(|r| format!(" at record {r}")).unwrap_or_default())]
    Parse {
        source_name: String,
        record: Option<usize>,
        message: String,
    },

    #[error("{source_name}: invalid geometry in record {record}: {message}")]
    Geometry {
        source_name: String,
        record: usize,
        message: String,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("value {value} at index {index} is outside the support of {family}")]
    Support {
        family: &'static str,
        index: usize,
        value: f64,
    },

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn parse(source_name: impl Into<String>, record: Option<usize>, message: impl Into<String>) -> Self {
        Error::Parse {
            source_name: source_name.into(),
            record,
            message: message.into(),
        }
    }

    /// Parse error for TOML input, located by line.
    pub(crate) fn toml(source_name: &str, text: &str, e: toml::de::Error) -> Self {
        let line = e.span().map(|s| {
            let end = s.start.min(text.len());
            text.as_bytes()[..end].iter().filter(|&&b| b == b'\n').count() + 1
        });
        Error::parse(source_name, line, e.message())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Tags the error with the pipeline stage it occurred in.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// True for errors caused by bad user input rather than a failing computation.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::Parse { .. } | Error::Geometry { .. } | Error::Config(_) | Error::Io { .. } => true,
            Error::Stage { source, .. } => source.is_input_error(),
            _ => false,
        }
    }
}
