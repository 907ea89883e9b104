use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    /// Non-positive curvature in conjugate gradients. On a correctly
    /// implemented normal operator this only happens when the derivative
    /// and its transpose disagree.
    #[error("CG breakdown at iteration {iteration}: curvature {curvature:e}")]
    CgBreakdown { iteration: usize, curvature: f64 },

    #[error("divergence: {0}")]
    Divergence(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(expected: &[usize], actual: &[usize]) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_vec(),
            actual: actual.to_vec(),
        }
    }

    /// True for failures of the iteration itself rather than of its inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::CgBreakdown { .. } | Error::Divergence(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
