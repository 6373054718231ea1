use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("mesh is disconnected: {unreachable} of {total} vertices unreachable from vertex {source_vertex}")]
    Disconnected {
        source_vertex: usize,
        unreachable: usize,
        total: usize,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("universe too small: block has {rows} rows but universe size is {cols}")]
    UniverseTooSmall { rows: usize, cols: usize },

    #[error("rank-deficient descriptor matrix (sigma_min/sigma_max = {ratio:.3e}); use more descriptor samples")]
    RankDeficient { ratio: f64 },

    #[error("eigensolver did not converge: max residual {max_residual:.3e} (tolerance {tolerance:.1e})")]
    EigenNotConverged { max_residual: f64, tolerance: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    /// Process exit code for this error class: 1 usage, 2 I/O, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) => 1,
            Error::Io { .. } | Error::Parse { .. } | Error::InvalidMesh(_) => 2,
            _ => 3,
        }
    }
}
