use std::fmt;
use std::path::PathBuf;

/// Pipeline stage that produced an error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Targets,
    Regression,
    Factorization,
    ScaleFixing,
    Correction,
    Refinement,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Targets => "targets",
            Stage::Regression => "regression",
            Stage::Factorization => "factorization",
            Stage::ScaleFixing => "scale fixing",
            Stage::Correction => "correction",
            Stage::Refinement => "refinement",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid dimension {0}: must be at least 2")]
    InvalidDimension(usize),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not Hermitian (relative deviation {0:.3e})")]
    NotHermitian(f64),

    #[error("invalid input: {0}")]
    Validation(String),

    #[error(
        "regression matrix is rank deficient (rank {rank} < {cols}); use mp_inverse or tikhonov"
    )]
    RankDeficient { rank: usize, cols: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{stage} stage: {source}")]
    AtStage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn at(stage: Stage) -> impl FnOnce(Error) -> Error {
        move |e| Error::AtStage {
            stage,
            source: Box::new(e),
        }
    }

    /// Innermost error, skipping stage labels.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtStage { source, .. } => source.root(),
            e => e,
        }
    }

    /// Errors caused by degenerate numerical input (rank loss, zero factors, ...).
    pub fn is_degenerate(&self) -> bool {
        matches!(
            self.root(),
            Error::Degenerate(_) | Error::RankDeficient { .. } | Error::Numerical(_)
        )
    }

    pub fn is_io(&self) -> bool {
        matches!(self.root(), Error::Io { .. })
    }
}
