//! Gramians of the discrete image norms: identity, Sobolev and pointwise
//! weighted. `||f||^2 = <f, G f>` for each.

use ndarray::Array2;
use num_complex::Complex64;

use super::{Fft2Plan, FrequencyGrid};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub enum GramianSpec {
    #[default]
    Identity,
    /// Fourier multiplier `(1 + |xi|^2)^s`, `xi` in cycles per pixel.
    Sobolev(f64),
    /// Pointwise multiplication by nonnegative weights.
    Weighted(Array2<f64>),
}

impl GramianSpec {
    pub fn validate(&self, shape: (usize, usize)) -> Result<()> {
        match self {
            GramianSpec::Identity => Ok(()),
            GramianSpec::Sobolev(s) if s.is_finite() && *s >= 0.0 => Ok(()),
            GramianSpec::Sobolev(s) => Err(Error::InvalidArgument(format!(
                "Sobolev exponent must be finite and >= 0, got {s}"
            ))),
            GramianSpec::Weighted(w) => {
                if w.dim() != shape {
                    return Err(Error::shape(&[shape.0, shape.1], w.shape()));
                }
                if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    return Err(Error::InvalidArgument("Gramian weights must be finite and nonnegative".into()));
                }
                Ok(())
            }
        }
    }

    pub fn is_identity(&self) -> bool {
        match self {
            GramianSpec::Identity => true,
            GramianSpec::Sobolev(s) => *s == 0.0,
            GramianSpec::Weighted(_) => false,
        }
    }

    fn sobolev_multiplier(s: f64, shape: (usize, usize), invert: bool) -> Array2<f64> {
        let e = if invert { -s } else { s };
        FrequencyGrid::new(shape.0, shape.1).map_xi_sq(|x2| (1.0 + x2).powf(e))
    }
}

fn apply_complex(f: &Array2<Complex64>, spec: &GramianSpec, invert: bool) -> Result<Array2<Complex64>> {
    spec.validate(f.dim())?;
    match spec {
        GramianSpec::Identity => Ok(f.to_owned()),
        GramianSpec::Sobolev(s) if *s == 0.0 => Ok(f.to_owned()),
        GramianSpec::Sobolev(s) => {
            let plan = Fft2Plan::new(f.nrows(), f.ncols());
            let mut spec_f = plan.forward(f);
            let m = GramianSpec::sobolev_multiplier(*s, f.dim(), invert);
            spec_f.zip_mut_with(&m, |z, w| *z *= *w);
            plan.inverse_inplace(&mut spec_f);
            Ok(spec_f)
        }
        GramianSpec::Weighted(w) => {
            if invert && w.iter().any(|v| *v <= 0.0) {
                return Err(Error::InvalidArgument(
                    "weighted Gramian with zero weights is not invertible".into(),
                ));
            }
            let mut out = f.to_owned();
            out.zip_mut_with(w, |z, w| *z = if invert { *z / *w } else { *z * *w });
            Ok(out)
        }
    }
}

/// `G f` for a complex image.
pub fn gram_apply_complex(f: &Array2<Complex64>, spec: &GramianSpec) -> Result<Array2<Complex64>> {
    apply_complex(f, spec, false)
}

/// `G^-1 f` for a complex image.
pub fn gram_apply_inverse_complex(f: &Array2<Complex64>, spec: &GramianSpec) -> Result<Array2<Complex64>> {
    apply_complex(f, spec, true)
}

/// `G f` for a real image. Every supported Gramian maps real images to real images.
pub fn gram_apply(f: &Array2<f64>, spec: &GramianSpec) -> Result<Array2<f64>> {
    match spec {
        GramianSpec::Identity => Ok(f.to_owned()),
        GramianSpec::Weighted(w) => {
            spec.validate(f.dim())?;
            Ok(f * w)
        }
        GramianSpec::Sobolev(_) => {
            let c = f.mapv(|v| Complex64::new(v, 0.0));
            Ok(apply_complex(&c, spec, false)?.mapv(|z| z.re))
        }
    }
}

/// `f^H G g`, conjugate-linear in `f`. The real part is the inner product
/// of the underlying real Hilbert space.
pub fn weighted_inner(f: &Array2<Complex64>, g: &Array2<Complex64>, spec: &GramianSpec) -> Result<Complex64> {
    if f.dim() != g.dim() {
        return Err(Error::shape(f.shape(), g.shape()));
    }
    let gg = gram_apply_complex(g, spec)?;
    Ok(f.iter().zip(gg.iter()).map(|(a, b)| a.conj() * b).sum())
}
