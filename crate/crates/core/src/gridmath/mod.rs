//! Uniform-grid numerics shared by every operator: unitary FFTs, the
//! spatial-frequency grid, Fresnel propagation and Gramian inner products.

mod fft;
mod gramian;
mod propagator;

pub use fft::{fft2, fft3, ifft2, ifft3, Fft2Plan};
pub use gramian::{gram_apply, gram_apply_complex, gram_apply_inverse_complex, weighted_inner, GramianSpec};
pub use propagator::{fresnel_propagate, Direction, FresnelPropagator, Padding};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Discrete frequency in cycles per sample for index `i` of an `n`-point
/// transform, in standard ordering (negative frequencies in the upper half).
#[inline]
pub fn fft_freq(i: usize, n: usize) -> f64 {
    let half = n.div_ceil(2);
    if i < half {
        i as f64 / n as f64
    } else {
        (i as f64 - n as f64) / n as f64
    }
}

/// Per-pixel spatial frequencies `xi` in cycles per pixel, DC at index origin.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    rows: usize,
    cols: usize,
    xi_rows: Vec<f64>,
    xi_cols: Vec<f64>,
}

impl FrequencyGrid {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            xi_rows: (0..rows).map(|i| fft_freq(i, rows)).collect(),
            xi_cols: (0..cols).map(|j| fft_freq(j, cols)).collect(),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Frequency vector `(xi_row, xi_col)` at grid index `(i, j)`.
    #[inline]
    pub fn xi(&self, i: usize, j: usize) -> (f64, f64) {
        (self.xi_rows[i], self.xi_cols[j])
    }

    #[inline]
    pub fn xi_sq(&self, i: usize, j: usize) -> f64 {
        self.xi_rows[i] * self.xi_rows[i] + self.xi_cols[j] * self.xi_cols[j]
    }

    /// Evaluates a radial multiplier `m(|xi|^2)` on the grid.
    pub fn map_xi_sq<F: Fn(f64) -> f64>(&self, f: F) -> Array2<f64> {
        Array2::from_shape_fn((self.rows, self.cols), |(i, j)| f(self.xi_sq(i, j)))
    }
}

/// Near-field imaging geometry. `fresnel_number` is the per-pixel Fresnel
/// number `a^2 k / (2 pi d)`; frequencies are measured in cycles per pixel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImagingGeometry {
    pub fresnel_number: f64,
    /// Pixel size `a` in nm.
    #[serde(default = "default_pixel_size")]
    pub pixel_size: f64,
    /// Defocus distance `d` in nm.
    #[serde(default)]
    pub defocus: Option<f64>,
    /// Wavenumber `k` in 1/nm.
    #[serde(default)]
    pub wavenumber: Option<f64>,
}

fn default_pixel_size() -> f64 {
    1.0
}

impl ImagingGeometry {
    pub fn new(fresnel_number: f64) -> Result<Self> {
        let g = Self {
            fresnel_number,
            pixel_size: 1.0,
            defocus: None,
            wavenumber: None,
        };
        g.validate()?;
        Ok(g)
    }

    /// Geometry from physical quantities; the Fresnel number is derived.
    pub fn from_physical(pixel_size: f64, defocus: f64, wavenumber: f64) -> Result<Self> {
        if !(pixel_size > 0.0 && defocus > 0.0 && wavenumber > 0.0) {
            return Err(Error::InvalidGeometry(
                "pixel size, defocus and wavenumber must be positive".into(),
            ));
        }
        let g = Self {
            fresnel_number: pixel_size * pixel_size * wavenumber / (2.0 * std::f64::consts::PI * defocus),
            pixel_size,
            defocus: Some(defocus),
            wavenumber: Some(wavenumber),
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fresnel_number.is_finite() && self.fresnel_number > 0.0) {
            return Err(Error::InvalidGeometry(format!(
                "Fresnel number must be positive, got {}",
                self.fresnel_number
            )));
        }
        if !(self.pixel_size.is_finite() && self.pixel_size > 0.0) {
            return Err(Error::InvalidGeometry(format!(
                "pixel size must be positive, got {}",
                self.pixel_size
            )));
        }
        if let (Some(d), Some(k)) = (self.defocus, self.wavenumber) {
            let nf = self.pixel_size * self.pixel_size * k / (2.0 * std::f64::consts::PI * d);
            if ((nf - self.fresnel_number) / self.fresnel_number).abs() > 1e-9 {
                return Err(Error::InvalidGeometry(format!(
                    "Fresnel number {} inconsistent with a^2 k / (2 pi d) = {}",
                    self.fresnel_number, nf
                )));
            }
        }
        Ok(())
    }

    /// Phase `pi |xi|^2 / N_F` of the Fresnel multiplier.
    #[inline]
    pub fn chirp_phase(&self, xi_sq: f64) -> f64 {
        std::f64::consts::PI * xi_sq / self.fresnel_number
    }
}
