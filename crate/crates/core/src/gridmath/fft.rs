//! Unitary discrete Fourier transforms on 2D and 3D grids.
//!
//! All transforms here are scaled by `1/sqrt(N)` in both directions, so
//! `ifft(fft(x)) == x` and Parseval holds without extra factors.

use std::sync::Arc;

use ndarray::{Array2, Array3, Axis};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Immutable 2D transform plan for one grid shape. Cheap to clone and
/// shareable across threads.
#[derive(Clone)]
pub struct Fft2Plan {
    rows: usize,
    cols: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
    scale: f64,
}

impl std::fmt::Debug for Fft2Plan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2Plan")
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .finish()
    }
}

impl Fft2Plan {
    pub fn new(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "empty FFT grid");
        let mut planner = FftPlanner::new();
        Self {
            rows,
            cols,
            row_fwd: planner.plan_fft_forward(cols),
            row_inv: planner.plan_fft_inverse(cols),
            col_fwd: planner.plan_fft_forward(rows),
            col_inv: planner.plan_fft_inverse(rows),
            scale: 1.0 / ((rows * cols) as f64).sqrt(),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn forward_inplace(&self, data: &mut Array2<Complex64>) {
        self.run(data, &self.row_fwd, &self.col_fwd);
    }

    pub fn inverse_inplace(&self, data: &mut Array2<Complex64>) {
        self.run(data, &self.row_inv, &self.col_inv);
    }

    pub fn forward(&self, data: &Array2<Complex64>) -> Array2<Complex64> {
        let mut out = data.as_standard_layout().into_owned();
        self.forward_inplace(&mut out);
        out
    }

    pub fn inverse(&self, data: &Array2<Complex64>) -> Array2<Complex64> {
        let mut out = data.as_standard_layout().into_owned();
        self.inverse_inplace(&mut out);
        out
    }

    fn run(&self, data: &mut Array2<Complex64>, row: &Arc<dyn Fft<f64>>, col: &Arc<dyn Fft<f64>>) {
        assert_eq!(data.dim(), (self.rows, self.cols), "FFT plan shape mismatch");
        if !data.is_standard_layout() {
            *data = data.as_standard_layout().into_owned();
        }
        let buf = data.as_slice_mut().expect("standard layout");
        // rustfft processes consecutive chunks of the transform length.
        row.process(buf);
        let mut t = transpose(buf, self.rows, self.cols);
        col.process(&mut t);
        let back = transpose(&t, self.cols, self.rows);
        for (dst, src) in buf.iter_mut().zip(back) {
            *dst = src * self.scale;
        }
    }
}

fn transpose(buf: &[Complex64], rows: usize, cols: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); rows * cols];
    for r in 0..rows {
        let src = &buf[r * cols..(r + 1) * cols];
        for (c, v) in src.iter().enumerate() {
            out[c * rows + r] = *v;
        }
    }
    out
}

fn check_finite2(field: &Array2<Complex64>) -> Result<()> {
    if field.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite("FFT input"))
    }
}

/// Unitary forward 2D transform. Rejects non-finite input.
pub fn fft2(field: &Array2<Complex64>) -> Result<Array2<Complex64>> {
    check_finite2(field)?;
    let (r, c) = field.dim();
    Ok(Fft2Plan::new(r, c).forward(field))
}

/// Unitary inverse 2D transform. Rejects non-finite input.
pub fn ifft2(spectrum: &Array2<Complex64>) -> Result<Array2<Complex64>> {
    check_finite2(spectrum)?;
    let (r, c) = spectrum.dim();
    Ok(Fft2Plan::new(r, c).inverse(spectrum))
}

fn fft3_impl(data: &Array3<Complex64>, inverse: bool) -> Array3<Complex64> {
    let mut out = data.as_standard_layout().into_owned();
    let dims = out.dim();
    let lens = [dims.0, dims.1, dims.2];
    let mut planner = FftPlanner::new();
    for (axis, &n) in lens.iter().enumerate() {
        let plan = if inverse {
            planner.plan_fft_inverse(n)
        } else {
            planner.plan_fft_forward(n)
        };
        let mut lane_buf = vec![Complex64::new(0.0, 0.0); n];
        for mut lane in out.lanes_mut(Axis(axis)) {
            for (b, v) in lane_buf.iter_mut().zip(lane.iter()) {
                *b = *v;
            }
            plan.process(&mut lane_buf);
            for (v, b) in lane.iter_mut().zip(lane_buf.iter()) {
                *v = *b;
            }
        }
    }
    let scale = 1.0 / ((lens[0] * lens[1] * lens[2]) as f64).sqrt();
    out.mapv_inplace(|z| z * scale);
    out
}

/// Unitary forward 3D transform.
pub fn fft3(data: &Array3<Complex64>) -> Array3<Complex64> {
    fft3_impl(data, false)
}

/// Unitary inverse 3D transform.
pub fn ifft3(data: &Array3<Complex64>) -> Array3<Complex64> {
    fft3_impl(data, true)
}
