use std::io;
use std::path::PathBuf;

use asyncadmm_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{file}{}: {message}", line.map(|l| format!(":{l}")).unwrap_or_default())]
    Parse {
        file: String,
        line: Option<usize>,
        message: String,
    },
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("unknown benchmark `{0}` (expected consensus-quadratic, consensus-lad or lasso-toy)")]
    UnknownBenchmark(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{0}")]
    Solver(#[from] CoreError),
    #[error("seed {seed}: {source}")]
    Run {
        seed: u64,
        #[source]
        source: CoreError,
    },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// 0 ok, 1 divergence, 2 configuration, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Solver(e) | CliError::Run { source: e, .. } if is_divergence(e) => 1,
            CliError::Io { .. } | CliError::Csv { .. } => 3,
            _ => 2,
        }
    }
}

fn is_divergence(e: &CoreError) -> bool {
    matches!(
        e,
        CoreError::Diverged { .. } | CoreError::NonFinite { .. } | CoreError::Unbounded
    )
}

pub type Result<T> = std::result::Result<T, CliError>;
