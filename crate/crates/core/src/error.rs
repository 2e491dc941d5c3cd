use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the calibration toolkit.
#[derive(Debug, Error)]
pub enum CalibError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("singular innovation covariance at sample {sample}")]
    SingularInnovation { sample: usize },

    #[error("normal matrix J^T J + lambda I is rank deficient (lambda = {lambda}); use lambda > 0")]
    RankDeficient { lambda: f64 },

    #[error("all particle weights vanished at iteration {iteration}; increase the weighting covariance R")]
    DegenerateWeights { iteration: usize },

    #[error("residual regressor diverged at epoch {epoch} (loss {loss:e}); reduce the learning rate")]
    Diverged { epoch: usize, loss: f64 },

    #[error("ensemble stage {stage} ({method}) failed: {source}")]
    Stage {
        stage: usize,
        method: String,
        #[source]
        source: Box<CalibError>,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CalibError>;

pub(crate) fn ensure_finite(name: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(CalibError::InvalidArgument(format!(
            "{name} contains a non-finite value"
        )))
    }
}
