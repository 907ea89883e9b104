//! Forward operators: near-field phase contrast, its linearization (CTF),
//! the parallel-beam Radon transform and their composition for tomography.

mod ctf;
mod phase_contrast;
mod radon;
mod tomo;

pub use ctf::{ctf_apply, ctf_invert_homogeneous, ctf_multipliers};
pub use phase_contrast::{
    pc_adjoint, pc_derivative, pc_forward, PcLinearization, PhaseContrastOperator, PhaseContrastProblem,
};
pub use radon::{backproject, backproject_volume, radon, radon_volume, Sample};
pub use tomo::{tomo_adjoint, tomo_derivative, tomo_forward, TomoLinearization, TomoOperator, TomoProblem, TomoSubproblem};

use ndarray::{Array2, Array3, Zip};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::gridmath::ImagingGeometry;

/// 2D object `f = phi - i mu/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Object2D {
    pub f: Array2<Complex64>,
    pub pixel_size: f64,
}

impl Object2D {
    pub fn new(f: Array2<Complex64>) -> Self {
        Self { f, pixel_size: 1.0 }
    }

    pub fn zeros(shape: (usize, usize)) -> Self {
        Self::new(Array2::zeros(shape))
    }

    pub fn from_phase_absorption(phi: &Array2<f64>, mu: &Array2<f64>) -> Result<Self> {
        if phi.dim() != mu.dim() {
            return Err(Error::shape(phi.shape(), mu.shape()));
        }
        let mut f = Array2::zeros(phi.dim());
        Zip::from(&mut f).and(phi).and(mu).for_each(|f, p, m| *f = Complex64::new(*p, -0.5 * m));
        Ok(Self::new(f))
    }

    pub fn shape(&self) -> (usize, usize) {
        self.f.dim()
    }

    pub fn phase(&self) -> Array2<f64> {
        self.f.mapv(|z| z.re)
    }

    pub fn absorption(&self) -> Array2<f64> {
        self.f.mapv(|z| -2.0 * z.im)
    }
}

/// Volume `v = delta - i beta`. Axis 0 is the rotation axis, axis 2 the
/// optical axis at angle zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume3D {
    pub v: Array3<Complex64>,
    pub voxel_size: f64,
}

impl Volume3D {
    pub fn new(v: Array3<Complex64>) -> Self {
        Self { v, voxel_size: 1.0 }
    }

    pub fn zeros(shape: (usize, usize, usize)) -> Self {
        Self::new(Array3::zeros(shape))
    }

    pub fn from_real(delta: &Array3<f64>) -> Self {
        Self::new(delta.mapv(|d| Complex64::new(d, 0.0)))
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        self.v.dim()
    }

    pub fn delta(&self) -> Array3<f64> {
        self.v.mapv(|z| z.re)
    }

    pub fn beta(&self) -> Array3<f64> {
        self.v.mapv(|z| -z.im)
    }
}

/// Stack of holograms, frame index first.
#[derive(Debug, Clone, PartialEq)]
pub struct HoloData {
    pub frames: Array3<f64>,
    /// Incidence angle of each frame in radians.
    pub angles: Vec<f64>,
    pub geom: ImagingGeometry,
    /// Estimate of `||noise||_Y`.
    pub noise_norm: Option<f64>,
}

impl HoloData {
    pub fn n_frames(&self) -> usize {
        self.frames.dim().0
    }

    pub fn frame_shape(&self) -> (usize, usize) {
        let (_, r, c) = self.frames.dim();
        (r, c)
    }

    pub fn validate(&self) -> Result<()> {
        self.geom.validate()?;
        if self.angles.len() != self.n_frames() {
            return Err(Error::shape(&[self.n_frames()], &[self.angles.len()]));
        }
        if self.angles.iter().any(|a| !a.is_finite()) || self.angles.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("angles must be finite and strictly increasing".into()));
        }
        if self.frames.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument("intensities must be finite and nonnegative".into()));
        }
        if let Some(e) = self.noise_norm {
            if !(e.is_finite() && e >= 0.0) {
                return Err(Error::InvalidArgument(format!("noise norm must be >= 0, got {e}")));
            }
        }
        Ok(())
    }
}
