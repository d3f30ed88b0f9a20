use std::path::{Path, PathBuf};

use asn_core::Error;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{}: {source}", path.display())]
    File { path: PathBuf, source: Error },
}

impl CliError {
    pub fn file(path: &Path, source: impl Into<Error>) -> Self {
        CliError::File {
            path: path.to_path_buf(),
            source: source.into(),
        }
    }

    /// 1 for invalid arguments or data, 2 for reading, writing, or decoding files.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) | CliError::File { source: e, .. } => match e {
                Error::Io(_) | Error::Pfm(_) => 2,
                _ => 1,
            },
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
