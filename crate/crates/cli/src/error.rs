use std::path::{Path, PathBuf};

use authalic::{Error, MeshError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid input: {0}")]
    Input(#[from] MeshError),
    #[error(transparent)]
    Numerical(Error),
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{0} checks failed")]
    Check(usize),
    #[error("malformed {path} at line {line}: {message}")]
    Artifact { path: PathBuf, line: usize, message: String },
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Mesh(m) => CliError::Input(m),
            Error::InvalidArgument(msg) => CliError::Usage(msg),
            other => CliError::Numerical(other),
        }
    }
}

impl CliError {
    /// 2 for anything the caller can fix by changing the invocation or its
    /// inputs, 1 for failures of the numerics or of the file system.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Input(_) | CliError::Artifact { .. } => 2,
            CliError::Numerical(_) | CliError::Check(_) | CliError::Write { .. } | CliError::Csv { .. } => 1,
        }
    }

    pub fn write(path: &Path, source: std::io::Error) -> Self {
        CliError::Write {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn require_file(path: &Path, what: &str) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{what} {} does not exist", path.display())))
    }
}
