//! Resolution and structure analysis of reconstructed volumes.

use std::io::Write;

use ndarray::{Array3, Zip};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridmath::{fft3, fft_freq, ifft3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FscCurve {
    /// Shell center frequencies in cycles per voxel.
    pub shell_centers: Vec<f64>,
    pub correlation: Vec<f64>,
    pub shell_counts: Vec<usize>,
    pub threshold: Vec<f64>,
    /// Shells where one of the volumes has no energy; correlation set to 0.
    pub zero_energy: Vec<bool>,
}

impl FscCurve {
    pub fn len(&self) -> usize {
        self.correlation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.correlation.is_empty()
    }

    pub fn shell_width(&self) -> f64 {
        0.5 / self.len() as f64
    }
}

fn radial_frequency(shape: (usize, usize, usize)) -> Array3<f64> {
    Array3::from_shape_fn(shape, |(i, j, k)| {
        let (a, b, c) = (fft_freq(i, shape.0), fft_freq(j, shape.1), fft_freq(k, shape.2));
        (a * a + b * b + c * c).sqrt()
    })
}

fn to_complex(v: &Array3<f64>) -> Array3<Complex64> {
    v.mapv(|x| Complex64::new(x, 0.0))
}

/// Fourier shell correlation over `n_shells` equal-width shells filling
/// the Nyquist ball; frequencies beyond 1/2 cycle per voxel are ignored.
pub fn fsc(a: &Array3<f64>, b: &Array3<f64>, n_shells: usize) -> Result<FscCurve> {
    if a.dim() != b.dim() {
        return Err(Error::shape(a.shape(), b.shape()));
    }
    if n_shells < 4 {
        return Err(Error::InvalidArgument(format!("need at least 4 shells, got {n_shells}")));
    }
    let fa = fft3(&to_complex(a));
    let fb = fft3(&to_complex(b));
    let rad = radial_frequency(a.dim());
    let width = 0.5 / n_shells as f64;
    let mut cross = vec![0.0; n_shells];
    let mut ea = vec![0.0; n_shells];
    let mut eb = vec![0.0; n_shells];
    let mut counts = vec![0usize; n_shells];
    Zip::from(&fa).and(&fb).and(&rad).for_each(|x, y, r| {
        if *r >= 0.5 {
            return;
        }
        let s = ((r / width) as usize).min(n_shells - 1);
        cross[s] += (x * y.conj()).re;
        ea[s] += x.norm_sqr();
        eb[s] += y.norm_sqr();
        counts[s] += 1;
    });
    if let Some(s) = counts.iter().position(|&c| c == 0) {
        return Err(Error::InvalidArgument(format!(
            "shell {s} is empty; use at most {} shells for this grid",
            a.dim().0.min(a.dim().1).min(a.dim().2) / 2
        )));
    }
    let mut correlation = Vec::with_capacity(n_shells);
    let mut zero_energy = Vec::with_capacity(n_shells);
    for s in 0..n_shells {
        let den = (ea[s] * eb[s]).sqrt();
        if den > 0.0 {
            correlation.push((cross[s] / den).clamp(-1.0, 1.0));
            zero_energy.push(false);
        } else {
            correlation.push(0.0);
            zero_energy.push(true);
        }
    }
    Ok(FscCurve {
        shell_centers: (0..n_shells).map(|s| (s as f64 + 0.5) * width).collect(),
        threshold: half_bit_threshold(&counts),
        correlation,
        shell_counts: counts,
        zero_energy,
    })
}

/// 1/2-bit information threshold for shells of `n` voxels.
pub fn half_bit_threshold(shell_counts: &[usize]) -> Vec<f64> {
    shell_counts
        .iter()
        .map(|&n| {
            let r = 1.0 / (n.max(1) as f64).sqrt();
            (0.2071 + 1.9102 * r) / (1.2071 + 0.9102 * r)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    /// Frequency of the first downward threshold crossing, cycles per voxel.
    pub frequency: f64,
    /// Half period `1 / (2 frequency)` times the voxel size.
    pub half_period: f64,
    /// No crossing found: the value is the Nyquist limit.
    pub nyquist_limited: bool,
}

pub fn resolution_from_fsc(curve: &FscCurve, voxel_size: f64) -> Resolution {
    let d: Vec<f64> = curve.correlation.iter().zip(&curve.threshold).map(|(c, t)| c - t).collect();
    let crossing = if d.first().is_some_and(|v| *v <= 0.0) {
        Some(curve.shell_centers[0])
    } else {
        (1..d.len()).find(|&k| d[k - 1] > 0.0 && d[k] <= 0.0).map(|k| {
            let (x0, x1) = (curve.shell_centers[k - 1], curve.shell_centers[k]);
            x0 + (x1 - x0) * d[k - 1] / (d[k - 1] - d[k])
        })
    };
    match crossing {
        Some(f) => Resolution { frequency: f, half_period: voxel_size / (2.0 * f), nyquist_limited: false },
        None => Resolution { frequency: 0.5, half_period: voxel_size, nyquist_limited: true },
    }
}

/// Normalized homogeneous-sphere form factor `3 (sin x - x cos x) / x^3`.
pub fn sphere_form_factor(x: f64) -> f64 {
    if x.abs() < 1e-3 {
        let x2 = x * x;
        return 1.0 - x2 / 10.0 + x2 * x2 / 280.0;
    }
    3.0 * (x.sin() - x * x.cos()) / (x * x * x)
}

fn fourier_filter<F: Fn(f64) -> f64 + Sync>(vol: &Array3<f64>, multiplier: F) -> Array3<f64> {
    let mut spec = fft3(&to_complex(vol));
    let rad = radial_frequency(vol.dim());
    Zip::from(&mut spec).and(&rad).par_for_each(|z, r| *z *= multiplier(*r));
    ifft3(&spec).mapv(|z| z.re)
}

fn gaussian_multiplier(fwhm: f64) -> impl Fn(f64) -> f64 + Sync {
    let sigma = fwhm / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt());
    move |xi: f64| (-2.0 * (std::f64::consts::PI * sigma * xi).powi(2)).exp()
}

/// Periodic Gaussian smoothing with the given FWHM in voxels.
pub fn gaussian_smooth(vol: &Array3<f64>, fwhm: f64) -> Result<Array3<f64>> {
    if !(fwhm.is_finite() && fwhm >= 0.0) {
        return Err(Error::InvalidArgument(format!("FWHM must be >= 0, got {fwhm}")));
    }
    Ok(fourier_filter(vol, gaussian_multiplier(fwhm)))
}

/// Convolution with the normalized form factor of a sphere of `diameter` voxels.
pub fn formfactor_convolve(vol: &Array3<f64>, diameter: f64) -> Result<Array3<f64>> {
    if !(diameter.is_finite() && diameter > 0.0) {
        return Err(Error::InvalidArgument(format!("sphere diameter must be positive, got {diameter}")));
    }
    let radius = diameter / 2.0;
    Ok(fourier_filter(vol, move |xi| sphere_form_factor(2.0 * std::f64::consts::PI * xi * radius)))
}

/// Gaussian smoothing followed by Tikhonov-regularized division by the
/// sphere form factor `K`: multiplier `G K / (K^2 + reg)`.
pub fn formfactor_deconvolve(vol: &Array3<f64>, diameter: f64, smooth_fwhm: f64, reg: f64) -> Result<Array3<f64>> {
    if !(diameter.is_finite() && diameter > 0.0) {
        return Err(Error::InvalidArgument(format!("sphere diameter must be positive, got {diameter}")));
    }
    if !(reg.is_finite() && reg > 0.0) {
        return Err(Error::InvalidArgument(format!("regularization must be positive, got {reg}")));
    }
    if !(smooth_fwhm.is_finite() && smooth_fwhm >= 0.0) {
        return Err(Error::InvalidArgument(format!("FWHM must be >= 0, got {smooth_fwhm}")));
    }
    let radius = diameter / 2.0;
    let g = gaussian_multiplier(smooth_fwhm);
    Ok(fourier_filter(vol, move |xi| {
        let k = sphere_form_factor(2.0 * std::f64::consts::PI * xi * radius);
        g(xi) * k / (k * k + reg)
    }))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PeakSet {
    /// Sub-voxel positions `(axis 0, axis 1, axis 2)` in voxels.
    pub positions: Vec<[f64; 3]>,
    pub amplitudes: Vec<f64>,
}

impl PeakSet {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// CSV with voxel and physical coordinates; `voxel_size` in nm.
    pub fn write_csv<W: Write>(&self, mut w: W, voxel_size: f64) -> std::io::Result<()> {
        writeln!(w, "x_vox,y_vox,z_vox,x_nm,y_nm,z_nm,amplitude")?;
        for (p, a) in self.positions.iter().zip(&self.amplitudes) {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                p[0],
                p[1],
                p[2],
                p[0] * voxel_size,
                p[1] * voxel_size,
                p[2] * voxel_size,
                a
            )?;
        }
        Ok(())
    }
}

/// Offset of the vertex of the parabola through `(-1, a), (0, b), (1, c)`.
fn parabola_offset(a: f64, b: f64, c: f64) -> (f64, f64) {
    let curv = a - 2.0 * b + c;
    if curv >= 0.0 {
        return (0.0, b);
    }
    let off = (0.5 * (a - c) / curv).clamp(-0.5, 0.5);
    (off, b - 0.25 * (a - c) * off)
}

/// Local maxima above `threshold_frac` times the global maximum, refined
/// by per-axis quadratic interpolation, then thinned greedily so that no
/// two peaks are closer than `min_separation` voxels.
pub fn locate_peaks(vol: &Array3<f64>, min_separation: f64, threshold_frac: f64) -> Result<PeakSet> {
    if !(min_separation >= 1.0) {
        return Err(Error::InvalidArgument(format!("minimum separation must be >= 1 voxel, got {min_separation}")));
    }
    if vol.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("volume"));
    }
    let max = vol.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > 0.0) {
        return Ok(PeakSet::default());
    }
    let level = threshold_frac * max;
    let (n0, n1, n2) = vol.dim();
    let dims = [n0 as isize, n1 as isize, n2 as isize];
    let mut candidates: Vec<([f64; 3], f64)> = Vec::new();
    for ((i, j, k), &v) in vol.indexed_iter() {
        if v < level {
            continue;
        }
        let mut is_max = true;
        let mut strict = false;
        'nb: for di in -1isize..=1 {
            for dj in -1isize..=1 {
                for dk in -1isize..=1 {
                    if di == 0 && dj == 0 && dk == 0 {
                        continue;
                    }
                    let p = [i as isize + di, j as isize + dj, k as isize + dk];
                    if (0..3).any(|a| p[a] < 0 || p[a] >= dims[a]) {
                        continue;
                    }
                    let w = vol[[p[0] as usize, p[1] as usize, p[2] as usize]];
                    if w > v {
                        is_max = false;
                        break 'nb;
                    }
                    if w < v {
                        strict = true;
                    }
                }
            }
        }
        if !(is_max && strict) {
            continue;
        }
        let idx = [i, j, k];
        let mut pos = [i as f64, j as f64, k as f64];
        let mut amp = v;
        for a in 0..3 {
            if idx[a] == 0 || idx[a] + 1 >= dims[a] as usize {
                continue;
            }
            let mut lo = idx;
            let mut hi = idx;
            lo[a] -= 1;
            hi[a] += 1;
            let (off, peak) = parabola_offset(vol[lo], v, vol[hi]);
            pos[a] += off;
            amp += peak - v;
        }
        candidates.push((pos, amp));
    }
    candidates.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0[0].total_cmp(&y.0[0])).then(x.0[1].total_cmp(&y.0[1])).then(x.0[2].total_cmp(&y.0[2])));
    let mut out = PeakSet::default();
    for (p, a) in candidates {
        if out.positions.iter().all(|q| crate::phantom::dist(q, &p) >= min_separation) {
            out.positions.push(p);
            out.amplitudes.push(a);
        }
    }
    Ok(out)
}
