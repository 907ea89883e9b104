use ndarray::{Array1, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Data-fidelity norm `||.||_Y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum Fidelity {
    /// Plain L2 norm, matched to additive Gaussian white noise.
    #[default]
    L2,
    /// Quadratic approximation of the Poisson log-likelihood:
    /// pointwise weight `1 / max(I0, I_obs)` inside the squared norm.
    PoissonQuadratic { i0: f64 },
}

impl Fidelity {
    pub fn validate(&self) -> Result<()> {
        match self {
            Fidelity::L2 => Ok(()),
            Fidelity::PoissonQuadratic { i0 } if i0.is_finite() && *i0 > 0.0 => Ok(()),
            Fidelity::PoissonQuadratic { i0 } => {
                Err(Error::InvalidArgument(format!("Poisson regularizer I0 must be positive, got {i0}")))
            }
        }
    }

    /// Diagonal of `G_Y` for the observed data.
    pub fn weights(&self, observed: &Array1<f64>) -> Result<Array1<f64>> {
        self.validate()?;
        match self {
            Fidelity::L2 => Ok(Array1::ones(observed.len())),
            Fidelity::PoissonQuadratic { i0 } => {
                if observed.iter().any(|v| *v < 0.0) {
                    return Err(Error::InvalidArgument("Poisson fidelity requires nonnegative data".into()));
                }
                Ok(observed.mapv(|v| 1.0 / v.max(*i0)))
            }
        }
    }
}

/// Weighted norm `sqrt(sum w r^2)`.
pub fn weighted_norm(residual: &Array1<f64>, weights: &Array1<f64>) -> f64 {
    Zip::from(residual)
        .and(weights)
        .fold(0.0, |acc, r, w| acc + w * r * r)
        .sqrt()
}

/// Returns `||model - observed||_Y` and the whitened residual
/// `sqrt(w) (model - observed)`, whose plain L2 norm is that same value.
pub fn fidelity_residual(
    model: &Array1<f64>,
    observed: &Array1<f64>,
    fidelity: &Fidelity,
) -> Result<(f64, Array1<f64>)> {
    if model.len() != observed.len() {
        return Err(Error::shape(&[observed.len()], &[model.len()]));
    }
    let w = fidelity.weights(observed)?;
    let mut whitened = model - observed;
    whitened.zip_mut_with(&w, |r, w| *r *= w.sqrt());
    let norm = whitened.dot(&whitened).sqrt();
    Ok((norm, whitened))
}
