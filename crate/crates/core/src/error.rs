use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed or inconsistent input data.
    #[error("{0}")]
    Data(String),

    #[error("non-finite value at date {t}, pixel ({row}, {col}), class {class}")]
    NonFinite {
        t: usize,
        row: usize,
        col: usize,
        class: usize,
    },

    #[error("glcm window yields no pixel pairs")]
    NoPairs,

    #[error("config: {0}")]
    Config(String),

    /// Solver breakdown: singular systems, non-finite messages.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
}

impl Error {
    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    /// Process exit code: 2 config, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Numerical(_) => 4,
            Error::Data(_)
            | Error::NonFinite { .. }
            | Error::NoPairs
            | Error::Io { .. }
            | Error::Format { .. } => 3,
        }
    }
}
