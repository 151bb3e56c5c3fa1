use thiserror::Error;

/// Errors raised by arrow construction, composition and evaluation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("omega vector has {found} blocks but the arrow expects {expected}")]
    BlockCount { expected: usize, found: usize },

    #[error("arrows are defined over different sample spaces")]
    SampleSpaceMismatch,

    #[error("matrix is not symmetric positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },

    #[error("covariance is degenerate (min eigenvalue {min_eigenvalue:e}); no Lebesgue density exists")]
    DegenerateCovariance { min_eigenvalue: f64 },

    #[error("mean map is not affine in its input (probe residual {residual:e})")]
    NotAffine { residual: f64 },

    #[error("unsupported composition: {0}")]
    UnsupportedComposition(String),

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error("training diverged at pass {pass}, row {row}")]
    Diverged { pass: usize, row: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{0} is not serializable")]
    NotSerializable(&'static str),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        })
    }
}
