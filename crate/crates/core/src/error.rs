use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("model diverged: non-finite value at step {step}, grid index {index}")]
    Divergence { step: usize, index: usize },

    #[error("Cholesky breakdown at pivot {pivot} (value {value:e})")]
    CholeskyBreakdown { pivot: usize, value: f64 },

    #[error("sketch is numerically rank deficient at column {column}")]
    RankDeficient { column: usize },

    #[error("CG breakdown at iteration {iteration}: curvature {curvature:e} is not positive")]
    CgBreakdown { iteration: usize, curvature: f64 },

    #[error("validation check `{0}` failed")]
    Validation(String),

    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Dimension {
            context,
            expected,
            actual,
        })
    }
}
