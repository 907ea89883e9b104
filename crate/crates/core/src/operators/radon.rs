//! Parallel-beam Radon transform by rotate-and-sum with bilinear
//! interpolation, applied slice by slice perpendicular to the rotation axis.
//!
//! Each angle is described by a sparse stencil mapping voxels of a slice to
//! detector columns. The backprojection applies the same stencil transposed,
//! so it is the exact adjoint of the projection.

use std::ops::{AddAssign, Mul};

use ndarray::parallel::prelude::*;
use ndarray::{Array2, Array3, ArrayView2, ArrayViewMut2, Axis};
use num_complex::Complex64;

use super::Volume3D;
use crate::error::{Error, Result};

/// Element types the Radon transform acts on.
pub trait Sample: Copy + Default + Send + Sync + AddAssign + Mul<f64, Output = Self> {}
impl<T: Copy + Default + Send + Sync + AddAssign + Mul<f64, Output = T>> Sample for T {}

#[derive(Debug, Clone, Copy)]
struct Tap {
    col: u32,
    voxel: u32,
    weight: f64,
}

/// Interpolation taps for one angle on an `n1 x n2` slice (axis 1 = detector
/// direction at angle zero, axis 2 = optical axis at angle zero).
fn stencil(n1: usize, n2: usize, theta: f64) -> Vec<Tap> {
    let diag = ((n1 * n1 + n2 * n2) as f64).sqrt().ceil() as usize;
    // Same parity as n2 keeps the samples on the grid at angle zero.
    let ns = if (diag - n2) % 2 == 0 { diag } else { diag + 1 };
    let (cx, cz, cs) = ((n1 as f64 - 1.0) / 2.0, (n2 as f64 - 1.0) / 2.0, (ns as f64 - 1.0) / 2.0);
    let (sin, cos) = theta.sin_cos();
    let mut taps = Vec::with_capacity(4 * n1 * n2);
    for t in 0..n1 {
        let tp = t as f64 - cx;
        for s in 0..ns {
            let sp = s as f64 - cs;
            let x = cx + tp * cos - sp * sin;
            let z = cz + tp * sin + sp * cos;
            let (x0, z0) = (x.floor(), z.floor());
            if x0 < -1.0 || z0 < -1.0 || x0 >= n1 as f64 || z0 >= n2 as f64 {
                continue;
            }
            let (fx, fz) = (x - x0, z - z0);
            let (xi, zi) = (x0 as isize, z0 as isize);
            for (dx, wx) in [(0, 1.0 - fx), (1, fx)] {
                let xx = xi + dx;
                if xx < 0 || xx >= n1 as isize || wx == 0.0 {
                    continue;
                }
                for (dz, wz) in [(0, 1.0 - fz), (1, fz)] {
                    let zz = zi + dz;
                    if zz < 0 || zz >= n2 as isize || wz == 0.0 {
                        continue;
                    }
                    taps.push(Tap { col: t as u32, voxel: (xx as usize * n2 + zz as usize) as u32, weight: wx * wz });
                }
            }
        }
    }
    taps
}

fn check_angles(angles: &[f64]) -> Result<()> {
    if angles.is_empty() {
        return Err(Error::InvalidArgument("empty angle list".into()));
    }
    if angles.iter().any(|a| !a.is_finite()) {
        return Err(Error::NonFinite("angles"));
    }
    Ok(())
}

fn check_shape(shape: (usize, usize, usize)) -> Result<()> {
    let (a, b, c) = shape;
    if a == 0 || b == 0 || c == 0 {
        return Err(Error::InvalidArgument("empty volume".into()));
    }
    if b * c > u32::MAX as usize {
        return Err(Error::InvalidArgument("slice too large".into()));
    }
    Ok(())
}

/// Projection `(n0, n1)` of `vol` at one angle, scaled by `voxel_size`.
pub(crate) fn project_angle<T: Sample>(vol: &Array3<T>, theta: f64, voxel_size: f64) -> Array2<T> {
    let (n0, n1, n2) = vol.dim();
    let taps = stencil(n1, n2, theta);
    let vol = vol.as_standard_layout();
    let mut proj = Array2::from_elem((n0, n1), T::default());
    proj.axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(vol.axis_iter(Axis(0)).into_par_iter())
        .for_each(|(mut row, slice)| {
            let s = slice.as_slice().expect("standard layout");
            for tap in &taps {
                row[tap.col as usize] += s[tap.voxel as usize] * tap.weight;
            }
            row.mapv_inplace(|v| v * voxel_size);
        });
    proj
}

/// Adds the backprojection of one `(n0, n1)` projection into `vol`.
pub(crate) fn backproject_angle_add<T: Sample>(
    proj: ArrayView2<'_, T>,
    theta: f64,
    voxel_size: f64,
    vol: &mut Array3<T>,
) {
    let (_, n1, n2) = vol.dim();
    let taps = stencil(n1, n2, theta);
    vol.axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(proj.axis_iter(Axis(0)).into_par_iter())
        .for_each(|(mut slice, row): (ArrayViewMut2<'_, T>, _)| {
            for tap in &taps {
                let (x, z) = (tap.voxel as usize / n2, tap.voxel as usize % n2);
                slice[[x, z]] += row[tap.col as usize] * (tap.weight * voxel_size);
            }
        });
}

/// Projections `(n_angles, n0, n1)`: line integrals along the rotated
/// optical axis, in units of `voxel_size`.
pub fn radon<T: Sample>(vol: &Array3<T>, angles: &[f64], voxel_size: f64) -> Result<Array3<T>> {
    check_angles(angles)?;
    check_shape(vol.dim())?;
    let (n0, n1, _) = vol.dim();
    let mut out = Array3::from_elem((angles.len(), n0, n1), T::default());
    for (mut frame, &theta) in out.axis_iter_mut(Axis(0)).zip(angles) {
        frame.assign(&project_angle(vol, theta, voxel_size));
    }
    Ok(out)
}

/// Exact transpose of [`radon`].
pub fn backproject<T: Sample>(
    projections: &Array3<T>,
    angles: &[f64],
    vol_shape: (usize, usize, usize),
    voxel_size: f64,
) -> Result<Array3<T>> {
    check_angles(angles)?;
    check_shape(vol_shape)?;
    let expected = (angles.len(), vol_shape.0, vol_shape.1);
    if projections.dim() != expected {
        return Err(Error::shape(&[expected.0, expected.1, expected.2], projections.shape()));
    }
    let mut vol = Array3::from_elem(vol_shape, T::default());
    for (frame, &theta) in projections.axis_iter(Axis(0)).zip(angles) {
        backproject_angle_add(frame, theta, voxel_size, &mut vol);
    }
    Ok(vol)
}

pub fn radon_volume(vol: &Volume3D, angles: &[f64]) -> Result<Array3<Complex64>> {
    radon(&vol.v, angles, vol.voxel_size)
}

pub fn backproject_volume(
    projections: &Array3<Complex64>,
    angles: &[f64],
    vol_shape: (usize, usize, usize),
    voxel_size: f64,
) -> Result<Volume3D> {
    let v = backproject(projections, angles, vol_shape, voxel_size)?;
    Ok(Volume3D { v, voxel_size })
}
