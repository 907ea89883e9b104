use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// A nonlinear forward map `F: R^n -> R^m` in real parameter coordinates.
///
/// Complex images, constraint subspaces and Gramians are the implementor's
/// business: the solver only sees flat real vectors, the Euclidean transpose
/// of the derivative, and the Gramian `G_X` of the parameter space.
pub trait ForwardProblem: Sync {
    fn param_len(&self) -> usize;
    fn data_len(&self) -> usize;

    fn forward(&self, x: &Array1<f64>) -> Result<Array1<f64>>;

    /// Frechet derivative at `x`, with any state needed by the
    /// derivative and its transpose precomputed.
    fn linearize<'a>(&'a self, x: &Array1<f64>) -> Result<Box<dyn Linearization + 'a>>;

    /// `G_X x` in parameter coordinates.
    fn gram(&self, x: &Array1<f64>) -> Array1<f64> {
        x.clone()
    }

    fn gram_is_identity(&self) -> bool {
        true
    }

    /// Per-parameter sign requirement: `+1` wants `x >= 0`, `-1` wants
    /// `x <= 0`, `0` is unconstrained. `None` disables the penalty.
    fn sign_orientation(&self) -> Option<&[i8]> {
        None
    }
}

/// `h -> F'[x] h` together with its Euclidean transpose.
pub trait Linearization: Sync {
    fn apply(&self, h: &Array1<f64>) -> Array1<f64>;
    fn apply_transpose(&self, g: &Array1<f64>) -> Array1<f64>;
}

/// Linear map given by a dense matrix; its own derivative everywhere.
#[derive(Debug, Clone)]
pub struct DenseLinearProblem {
    matrix: Array2<f64>,
    orientation: Option<Vec<i8>>,
}

impl DenseLinearProblem {
    pub fn new(matrix: Array2<f64>) -> Self {
        Self { matrix, orientation: None }
    }

    pub fn with_sign_orientation(mut self, orientation: Vec<i8>) -> Result<Self> {
        if orientation.len() != self.matrix.ncols() {
            return Err(Error::shape(&[self.matrix.ncols()], &[orientation.len()]));
        }
        self.orientation = Some(orientation);
        Ok(self)
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }
}

struct DenseLin<'a>(&'a Array2<f64>);

impl Linearization for DenseLin<'_> {
    fn apply(&self, h: &Array1<f64>) -> Array1<f64> {
        self.0.dot(h)
    }

    fn apply_transpose(&self, g: &Array1<f64>) -> Array1<f64> {
        self.0.t().dot(g)
    }
}

impl ForwardProblem for DenseLinearProblem {
    fn param_len(&self) -> usize {
        self.matrix.ncols()
    }

    fn data_len(&self) -> usize {
        self.matrix.nrows()
    }

    fn forward(&self, x: &Array1<f64>) -> Result<Array1<f64>> {
        if x.len() != self.param_len() {
            return Err(Error::shape(&[self.param_len()], &[x.len()]));
        }
        Ok(self.matrix.dot(x))
    }

    fn linearize<'a>(&'a self, _x: &Array1<f64>) -> Result<Box<dyn Linearization + 'a>> {
        Ok(Box::new(DenseLin(&self.matrix)))
    }

    fn sign_orientation(&self) -> Option<&[i8]> {
        self.orientation.as_deref()
    }
}
