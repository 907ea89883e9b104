//! Contrast transfer function: the phase-contrast operator linearized at `f = 0`.

use ndarray::{Array2, Zip};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::gridmath::{Fft2Plan, FrequencyGrid, ImagingGeometry};

/// `(2 sin(pi xi^2/N_F), cos(pi xi^2/N_F))` on the FFT grid.
pub fn ctf_multipliers(shape: (usize, usize), geom: &ImagingGeometry) -> (Array2<f64>, Array2<f64>) {
    let grid = FrequencyGrid::new(shape.0, shape.1);
    let s = grid.map_xi_sq(|x2| 2.0 * geom.chirp_phase(x2).sin());
    let c = grid.map_xi_sq(|x2| geom.chirp_phase(x2).cos());
    (s, c)
}

fn to_complex(a: &Array2<f64>) -> Array2<Complex64> {
    a.mapv(|v| Complex64::new(v, 0.0))
}

/// Predicted `I - 1` of a weak object: `F^-1(2 sin F(phi) - cos F(mu))`.
pub fn ctf_apply(phi: &Array2<f64>, mu: &Array2<f64>, geom: &ImagingGeometry) -> Result<Array2<f64>> {
    if phi.dim() != mu.dim() {
        return Err(Error::shape(phi.shape(), mu.shape()));
    }
    geom.validate()?;
    let plan = Fft2Plan::new(phi.nrows(), phi.ncols());
    let (s, c) = ctf_multipliers(phi.dim(), geom);
    let p = plan.forward(&to_complex(phi));
    let m = plan.forward(&to_complex(mu));
    let mut out = Array2::zeros(phi.dim());
    Zip::from(&mut out)
        .and(&p)
        .and(&m)
        .and(&s)
        .and(&c)
        .for_each(|o, p, m, s, c| *o = *s * p - *c * m);
    plan.inverse_inplace(&mut out);
    Ok(out.mapv(|z| z.re))
}

/// Direct CTF inversion for a single-material object `mu = c phi`:
/// `F(phi) = m F(I - 1) / (m^2 + alpha)` with `m = 2 sin - c cos`.
pub fn ctf_invert_homogeneous(
    intensity: &Array2<f64>,
    ratio: f64,
    geom: &ImagingGeometry,
    alpha: f64,
) -> Result<Array2<f64>> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::InvalidArgument(format!("CTF regularization must be positive, got {alpha}")));
    }
    if !(ratio.is_finite() && ratio >= 0.0) {
        return Err(Error::InvalidArgument(format!("homogeneous ratio must be >= 0, got {ratio}")));
    }
    geom.validate()?;
    let plan = Fft2Plan::new(intensity.nrows(), intensity.ncols());
    let (s, c) = ctf_multipliers(intensity.dim(), geom);
    let mut spec = plan.forward(&intensity.mapv(|v| Complex64::new(v - 1.0, 0.0)));
    Zip::from(&mut spec).and(&s).and(&c).for_each(|z, s, c| {
        let m = s - ratio * c;
        *z *= m / (m * m + alpha);
    });
    plan.inverse_inplace(&mut spec);
    Ok(spec.mapv(|z| z.re))
}
