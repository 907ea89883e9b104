//! All-at-once phase-contrast tomography:
//! `F(v)_theta = |D(exp(-i k R_theta v))|^2`.

use ndarray::{Array1, Array2, Array3, Axis};
use num_complex::Complex64;
use rayon::prelude::*;

use super::phase_contrast::{PcLinearization, PhaseContrastOperator};
use super::radon::{backproject_angle_add, project_angle};
use super::{HoloData, Volume3D};
use crate::error::{Error, Result};
use crate::gridmath::{ImagingGeometry, Padding};
use crate::solver::{ConstraintSpec, ForwardProblem, Linearization, Parametrization};

#[derive(Debug, Clone)]
pub struct TomoOperator {
    vol_shape: (usize, usize, usize),
    angles: Vec<f64>,
    voxel_size: f64,
    /// Wavenumber `k` multiplying the projections.
    projection_scale: f64,
    pc: PhaseContrastOperator,
}

impl TomoOperator {
    pub fn new(
        vol_shape: (usize, usize, usize),
        angles: Vec<f64>,
        geom: ImagingGeometry,
        padding: Padding,
    ) -> Result<Self> {
        let (n0, n1, n2) = vol_shape;
        if n0 == 0 || n1 == 0 || n2 == 0 {
            return Err(Error::InvalidArgument("empty volume".into()));
        }
        if angles.is_empty() {
            return Err(Error::InvalidArgument("empty angle list".into()));
        }
        if angles.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite("angles"));
        }
        let pc = PhaseContrastOperator::new((n0, n1), geom, padding)?;
        Ok(Self { vol_shape, angles, voxel_size: 1.0, projection_scale: 1.0, pc })
    }

    /// Sets voxel size and wavenumber; projections are scaled by both.
    pub fn with_scale(mut self, voxel_size: f64, projection_scale: f64) -> Result<Self> {
        if !(voxel_size.is_finite() && voxel_size > 0.0 && projection_scale.is_finite() && projection_scale > 0.0) {
            return Err(Error::InvalidArgument("voxel size and projection scale must be positive".into()));
        }
        self.voxel_size = voxel_size;
        self.projection_scale = projection_scale;
        Ok(self)
    }

    pub fn vol_shape(&self) -> (usize, usize, usize) {
        self.vol_shape
    }

    pub fn frame_shape(&self) -> (usize, usize) {
        (self.vol_shape.0, self.vol_shape.1)
    }

    pub fn n_frames(&self) -> usize {
        self.angles.len()
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn geometry(&self) -> &ImagingGeometry {
        self.pc.propagator().geometry()
    }

    fn check_volume(&self, vol: &Array3<Complex64>) -> Result<()> {
        if vol.dim() != self.vol_shape {
            let (a, b, c) = self.vol_shape;
            return Err(Error::shape(&[a, b, c], vol.shape()));
        }
        if vol.iter().any(|z| !z.is_finite()) {
            return Err(Error::NonFinite("volume"));
        }
        Ok(())
    }

    fn check_frames(&self, frames: &[usize]) -> Result<()> {
        if let Some(&j) = frames.iter().find(|&&j| j >= self.n_frames()) {
            return Err(Error::InvalidArgument(format!("frame {j} out of range 0..{}", self.n_frames())));
        }
        Ok(())
    }

    /// `k R_theta v` for one frame.
    pub fn projection(&self, vol: &Array3<Complex64>, frame: usize) -> Array2<Complex64> {
        let mut p = project_angle(vol, self.angles[frame], self.voxel_size);
        p.mapv_inplace(|z| z * self.projection_scale);
        p
    }

    pub fn forward(&self, vol: &Array3<Complex64>) -> Result<Array3<f64>> {
        let all: Vec<usize> = (0..self.n_frames()).collect();
        self.forward_frames(vol, &all)
    }

    /// Holograms of the listed frames, stacked in the given order.
    pub fn forward_frames(&self, vol: &Array3<Complex64>, frames: &[usize]) -> Result<Array3<f64>> {
        self.check_volume(vol)?;
        self.check_frames(frames)?;
        let images = frames
            .par_iter()
            .map(|&j| self.pc.forward(&self.projection(vol, j)))
            .collect::<Result<Vec<_>>>()?;
        Ok(stack(&images, self.frame_shape()))
    }

    pub fn linearize(&self, vol: &Array3<Complex64>, frames: &[usize]) -> Result<TomoLinearization<'_>> {
        self.check_volume(vol)?;
        self.check_frames(frames)?;
        let lins = frames
            .par_iter()
            .map(|&j| self.pc.linearize(&self.projection(vol, j)))
            .collect::<Result<Vec<_>>>()?;
        Ok(TomoLinearization { op: self, frames: frames.to_vec(), lins })
    }
}

fn stack(images: &[Array2<f64>], shape: (usize, usize)) -> Array3<f64> {
    let mut out = Array3::zeros((images.len(), shape.0, shape.1));
    for (mut dst, src) in out.axis_iter_mut(Axis(0)).zip(images) {
        dst.assign(src);
    }
    out
}

/// Derivative of the tomographic operator restricted to a frame subset.
/// Holds one detector field per frame, never the full data set.
pub struct TomoLinearization<'a> {
    op: &'a TomoOperator,
    frames: Vec<usize>,
    lins: Vec<PcLinearization<'a>>,
}

impl TomoLinearization<'_> {
    pub fn frames(&self) -> &[usize] {
        &self.frames
    }

    pub fn apply(&self, h: &Array3<Complex64>) -> Array3<f64> {
        assert_eq!(h.dim(), self.op.vol_shape, "perturbation shape mismatch");
        let images: Vec<Array2<f64>> = self
            .frames
            .par_iter()
            .zip(self.lins.par_iter())
            .map(|(&j, lin)| lin.apply(&self.op.projection(h, j)))
            .collect();
        stack(&images, self.op.frame_shape())
    }

    /// `sum_theta k R_theta^T J_theta^T g_theta`.
    pub fn apply_transpose(&self, g: &Array3<f64>) -> Array3<Complex64> {
        let (r, c) = self.op.frame_shape();
        assert_eq!(g.dim(), (self.frames.len(), r, c), "data shape mismatch");
        let back: Vec<Array2<Complex64>> = self
            .lins
            .par_iter()
            .zip(g.axis_iter(Axis(0)).into_par_iter())
            .map(|(lin, gj)| lin.apply_transpose(&gj.to_owned()))
            .collect();
        let mut vol = Array3::zeros(self.op.vol_shape);
        let w = self.op.voxel_size * self.op.projection_scale;
        for (&j, b) in self.frames.iter().zip(&back) {
            backproject_angle_add(b.view(), self.op.angles[j], w, &mut vol);
        }
        vol
    }
}

fn operator_for(vol: &Volume3D, angles: &[f64], geom: &ImagingGeometry, scale: f64) -> Result<TomoOperator> {
    TomoOperator::new(vol.shape(), angles.to_vec(), *geom, Padding::None)?.with_scale(vol.voxel_size, scale)
}

/// Simulated holograms of `vol` at each angle, without padding.
pub fn tomo_forward(vol: &Volume3D, angles: &[f64], geom: &ImagingGeometry, projection_scale: f64) -> Result<HoloData> {
    let frames = operator_for(vol, angles, geom, projection_scale)?.forward(&vol.v)?;
    Ok(HoloData { frames, angles: angles.to_vec(), geom: *geom, noise_norm: None })
}

pub fn tomo_derivative(
    vol: &Volume3D,
    h: &Array3<Complex64>,
    angles: &[f64],
    geom: &ImagingGeometry,
    projection_scale: f64,
) -> Result<Array3<f64>> {
    if h.dim() != vol.shape() {
        return Err(Error::shape(vol.v.shape(), h.shape()));
    }
    let op = operator_for(vol, angles, geom, projection_scale)?;
    let all: Vec<usize> = (0..angles.len()).collect();
    Ok(op.linearize(&vol.v, &all)?.apply(h))
}

pub fn tomo_adjoint(
    vol: &Volume3D,
    g: &Array3<f64>,
    angles: &[f64],
    geom: &ImagingGeometry,
    projection_scale: f64,
) -> Result<Volume3D> {
    let (a, b, _) = vol.shape();
    if g.dim() != (angles.len(), a, b) {
        return Err(Error::shape(&[angles.len(), a, b], g.shape()));
    }
    let op = operator_for(vol, angles, geom, projection_scale)?;
    let all: Vec<usize> = (0..angles.len()).collect();
    let v = op.linearize(&vol.v, &all)?.apply_transpose(g);
    Ok(Volume3D { v, voxel_size: vol.voxel_size })
}

/// Tomography over constrained parameters. Frame subsets are exposed as
/// separate [`ForwardProblem`]s through [`TomoProblem::subproblem`].
#[derive(Debug, Clone)]
pub struct TomoProblem {
    op: TomoOperator,
    param: Parametrization,
}

impl TomoProblem {
    pub fn new(op: TomoOperator, constraints: &ConstraintSpec) -> Result<Self> {
        let (a, b, c) = op.vol_shape();
        let param = Parametrization::new(&[a, b, c], constraints)?;
        Ok(Self { op, param })
    }

    pub fn operator(&self) -> &TomoOperator {
        &self.op
    }

    pub fn parametrization(&self) -> &Parametrization {
        &self.param
    }

    pub fn volume(&self, p: &Array1<f64>) -> Array3<Complex64> {
        Array3::from_shape_vec(self.op.vol_shape, self.param.embed(p)).expect("parametrization matches volume")
    }

    pub fn params_of(&self, vol: &Array3<Complex64>) -> Result<Array1<f64>> {
        if vol.dim() != self.op.vol_shape {
            return Err(Error::shape(self.param.shape(), vol.shape()));
        }
        let flat: Vec<Complex64> = vol.iter().copied().collect();
        Ok(self.param.project_params(&flat))
    }

    pub fn subproblem(&self, frames: &[usize]) -> Result<TomoSubproblem<'_>> {
        self.op.check_frames(frames)?;
        Ok(TomoSubproblem { problem: self, frames: frames.to_vec() })
    }

    /// Concatenated data of the listed frames, matching [`TomoSubproblem`] ordering.
    pub fn frame_data(&self, data: &Array3<f64>, frames: &[usize]) -> Result<Array1<f64>> {
        let (r, c) = self.op.frame_shape();
        if data.dim() != (self.op.n_frames(), r, c) {
            return Err(Error::shape(&[self.op.n_frames(), r, c], data.shape()));
        }
        self.op.check_frames(frames)?;
        let mut out = Vec::with_capacity(frames.len() * r * c);
        for &j in frames {
            out.extend(data.index_axis(Axis(0), j).iter());
        }
        Ok(Array1::from(out))
    }
}

/// The tomographic problem restricted to a list of frames.
pub struct TomoSubproblem<'a> {
    problem: &'a TomoProblem,
    frames: Vec<usize>,
}

impl TomoSubproblem<'_> {
    pub fn frames(&self) -> &[usize] {
        &self.frames
    }
}

struct TomoProblemLin<'a> {
    lin: TomoLinearization<'a>,
    param: &'a Parametrization,
    shape: (usize, usize, usize),
}

impl Linearization for TomoProblemLin<'_> {
    fn apply(&self, h: &Array1<f64>) -> Array1<f64> {
        let v = Array3::from_shape_vec(self.shape, self.param.embed(h)).expect("parametrization matches volume");
        Array1::from_iter(self.lin.apply(&v))
    }

    fn apply_transpose(&self, g: &Array1<f64>) -> Array1<f64> {
        let (r, c) = self.lin.op.frame_shape();
        let g = g.to_shape((self.lin.frames.len(), r, c)).expect("data length").to_owned();
        let t = self.lin.apply_transpose(&g);
        self.param.embed_transpose(t.as_slice().expect("standard layout"))
    }
}

impl ForwardProblem for TomoSubproblem<'_> {
    fn param_len(&self) -> usize {
        self.problem.param.len()
    }

    fn data_len(&self) -> usize {
        let (r, c) = self.problem.op.frame_shape();
        self.frames.len() * r * c
    }

    fn forward(&self, x: &Array1<f64>) -> Result<Array1<f64>> {
        if x.len() != self.param_len() {
            return Err(Error::shape(&[self.param_len()], &[x.len()]));
        }
        let frames = self.problem.op.forward_frames(&self.problem.volume(x), &self.frames)?;
        Ok(Array1::from_iter(frames))
    }

    fn linearize<'a>(&'a self, x: &Array1<f64>) -> Result<Box<dyn Linearization + 'a>> {
        if x.len() != self.param_len() {
            return Err(Error::shape(&[self.param_len()], &[x.len()]));
        }
        let lin = self.problem.op.linearize(&self.problem.volume(x), &self.frames)?;
        Ok(Box::new(TomoProblemLin { lin, param: &self.problem.param, shape: self.problem.op.vol_shape }))
    }

    fn gram(&self, x: &Array1<f64>) -> Array1<f64> {
        if self.gram_is_identity() {
            return x.clone();
        }
        let v = self.problem.param.embed(x);
        self.problem.param.embed_transpose(&v)
    }

    fn gram_is_identity(&self) -> bool {
        self.problem.param.is_isometric()
    }

    fn sign_orientation(&self) -> Option<&[i8]> {
        self.problem.param.orientation()
    }
}
