use thiserror::Error;

/// Errors raised by the ASCCA library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum AsccaError {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("matrix is not positive definite ({context}); try a larger regularization alpha")]
    NotPositiveDefinite { context: String },

    #[error("retraction step is rank deficient (smallest eigenvalue {min_eig:e}); shrink the step")]
    RankDeficientStep { min_eig: f64 },

    #[error("singular value decomposition failed: {0}")]
    SvdFailure(String),

    #[error("column {index} of {matrix} is constant and cannot be normalized")]
    DegenerateColumn { matrix: &'static str, index: usize },

    #[error("initial point is infeasible: {0}")]
    InfeasibleInit(String),

    #[error("point is not on the manifold: ||U^T B U - I||_F = {residual:e}")]
    InfeasiblePoint { residual: f64 },

    #[error("loading draw degenerate after {attempts} attempts")]
    DegenerateDraw { attempts: usize },

    #[error("matrix does not have full column rank")]
    RankDeficient,

    #[error("canonical variate {pair} has zero variance")]
    ZeroVariance { pair: usize },

    #[error("fold {fold} has {size} rows; at least {required} are needed")]
    FoldTooSmall {
        fold: usize,
        size: usize,
        required: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

impl AsccaError {
    pub(crate) fn dims(
        context: &'static str,
        expected: impl Into<String>,
        found: impl Into<String>,
    ) -> Self {
        AsccaError::DimensionMismatch {
            context,
            expected: expected.into(),
            found: found.into(),
        }
    }

    /// True for errors caused by bad input or configuration rather than
    /// by the numerics.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            AsccaError::DimensionMismatch { .. }
                | AsccaError::DegenerateColumn { .. }
                | AsccaError::InfeasibleInit(_)
                | AsccaError::FoldTooSmall { .. }
                | AsccaError::InvalidConfig(_)
                | AsccaError::Parse { .. }
                | AsccaError::Io(_)
        )
    }
}

impl From<std::io::Error> for AsccaError {
    fn from(e: std::io::Error) -> Self {
        AsccaError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, AsccaError>;
