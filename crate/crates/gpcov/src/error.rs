use std::path::PathBuf;

/// Error type shared by every module of the crate.
#[derive(Debug, thiserror::Error)]
pub enum GpError {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("bessel_k domain error: nu = {nu}, x = {x} (requires nu >= 0, x > 0)")]
    BesselDomain { nu: f64, x: f64 },

    #[error("bessel_k failed to converge for nu = {nu}, x = {x}")]
    BesselNoConverge { nu: f64, x: f64 },

    #[error("matrix not positive definite (pivot {pivot} <= 0)")]
    NotPositiveDefinite { pivot: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("design points {i} and {j} coincide exactly")]
    DuplicatePoints { i: usize, j: usize },

    #[error("objective failed at every optimizer start: {0}")]
    ObjectiveFailure(String),

    #[error("replication {rep_index} failed: {source}")]
    ReplicationFailure {
        rep_index: u64,
        #[source]
        source: Box<GpError>,
    },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("{path}: {source}")]
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
}

impl GpError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        GpError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 1 for usage errors, 2 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            GpError::Usage(_) => 1,
            _ => 2,
        }
    }
}
