//! Synthetic test objects: piecewise-constant 2D phantoms, sphere packings
//! and measurement noise.
//!
//! Pixel and voxel centers sit at integer coordinates; pixel `i` covers
//! `[i - 1/2, i + 1/2)` along each axis.

use ndarray::{Array, Array2, Array3, Dimension};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{Object2D, Volume3D};

/// Supersampling factor for boundary pixels.
const AA: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Element {
    Disc {
        center: [f64; 2],
        radius: f64,
        phi: f64,
        mu: f64,
    },
    /// Axis-aligned rectangle from `corner` (lowest coordinates) spanning `size`.
    Rectangle {
        corner: [f64; 2],
        size: [f64; 2],
        phi: f64,
        mu: f64,
    },
    /// Bitmap rows of `#` (set) and `.` (clear), each cell `scale` pixels
    /// wide, with the top-left cell at pixel `origin`. Defaults to the
    /// built-in glyph.
    Glyph {
        origin: [usize; 2],
        #[serde(default = "builtin_glyph")]
        bitmap: Vec<String>,
        #[serde(default = "one")]
        scale: usize,
        phi: f64,
        mu: f64,
    },
}

fn one() -> usize {
    1
}

/// A 24 x 24 glyph with several holes and strokes of 2 to 4 cells.
pub fn builtin_glyph() -> Vec<String> {
    [
        "........................",
        "..####################..",
        "..####################..",
        "..##..............####..",
        "..##..............####..",
        "..##..########....####..",
        "..##..########....####..",
        "..##..##....##....####..",
        "..##..##....##..........",
        "..##..########..........",
        "..##..########....####..",
        "..##..............####..",
        "..##..............####..",
        "..################..##..",
        "..################..##..",
        "..........##........##..",
        "..........##..####..##..",
        "..####....##..####..##..",
        "..####....##........##..",
        "..####....############..",
        "..####....############..",
        "..####..................",
        "..####..................",
        "........................",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

/// Elements are composited by addition. `negate` flips the sign of the
/// whole object (missing-material convention).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomSpec2D {
    pub shape: [usize; 2],
    #[serde(default)]
    pub elements: Vec<Element>,
    #[serde(default)]
    pub negate: bool,
}

impl PhantomSpec2D {
    pub fn validate(&self) -> Result<()> {
        let [rows, cols] = self.shape;
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument("phantom shape must be nonzero".into()));
        }
        let (lo, hi_r, hi_c) = (-0.5, rows as f64 - 0.5, cols as f64 - 0.5);
        for (k, e) in self.elements.iter().enumerate() {
            let out = |what: &str| Err(Error::InvalidArgument(format!("element {k}: {what}")));
            match e {
                Element::Disc { center, radius, phi, mu } => {
                    if !(radius.is_finite() && *radius > 0.0 && phi.is_finite() && mu.is_finite()) {
                        return out("radius must be positive and values finite");
                    }
                    if center[0] - radius < lo
                        || center[0] + radius > hi_r
                        || center[1] - radius < lo
                        || center[1] + radius > hi_c
                    {
                        return out("disc leaves the frame");
                    }
                }
                Element::Rectangle { corner, size, phi, mu } => {
                    if !(size[0] > 0.0 && size[1] > 0.0 && phi.is_finite() && mu.is_finite()) {
                        return out("size must be positive and values finite");
                    }
                    if corner[0] < lo || corner[1] < lo || corner[0] + size[0] > hi_r || corner[1] + size[1] > hi_c {
                        return out("rectangle leaves the frame");
                    }
                }
                Element::Glyph { origin, bitmap, scale, phi, mu } => {
                    if *scale == 0 || !(phi.is_finite() && mu.is_finite()) {
                        return out("scale must be >= 1 and values finite");
                    }
                    let width = bitmap.first().map_or(0, |r| r.chars().count());
                    if width == 0 || bitmap.iter().any(|r| r.chars().count() != width) {
                        return out("glyph rows must be nonempty and of equal length");
                    }
                    if origin[0] + bitmap.len() * scale > rows || origin[1] + width * scale > cols {
                        return out("glyph leaves the frame");
                    }
                    if bitmap.iter().any(|r| r.chars().any(|c| c != '#' && c != '.')) {
                        return out("glyph rows may only contain '#' and '.'");
                    }
                }
            }
        }
        Ok(())
    }
}

/// Fraction of pixel `(i, j)` inside the disc, supersampled on the boundary.
fn disc_fraction(i: usize, j: usize, center: [f64; 2], radius: f64) -> f64 {
    let (dy, dx) = (i as f64 - center[0], j as f64 - center[1]);
    let d = (dy * dy + dx * dx).sqrt();
    if d <= radius - 0.75 {
        return 1.0;
    }
    if d >= radius + 0.75 {
        return 0.0;
    }
    let mut hits = 0;
    for a in 0..AA {
        for b in 0..AA {
            let y = dy - 0.5 + (a as f64 + 0.5) / AA as f64;
            let x = dx - 0.5 + (b as f64 + 0.5) / AA as f64;
            if y * y + x * x < radius * radius {
                hits += 1;
            }
        }
    }
    hits as f64 / (AA * AA) as f64
}

fn interval_overlap(center: f64, lo: f64, hi: f64) -> f64 {
    ((center + 0.5).min(hi) - (center - 0.5).max(lo)).max(0.0)
}

/// Real-valued fraction map of a single element.
pub fn element_mask(shape: [usize; 2], element: &Element) -> Array2<f64> {
    let mut m = Array2::zeros((shape[0], shape[1]));
    match element {
        Element::Disc { center, radius, .. } => {
            let r0 = ((center[0] - radius - 1.0).floor().max(0.0)) as usize;
            let r1 = ((center[0] + radius + 1.0).ceil() as usize).min(shape[0] - 1);
            let c0 = ((center[1] - radius - 1.0).floor().max(0.0)) as usize;
            let c1 = ((center[1] + radius + 1.0).ceil() as usize).min(shape[1] - 1);
            for i in r0..=r1 {
                for j in c0..=c1 {
                    m[[i, j]] = disc_fraction(i, j, *center, *radius);
                }
            }
        }
        Element::Rectangle { corner, size, .. } => {
            for ((i, j), v) in m.indexed_iter_mut() {
                *v = interval_overlap(i as f64, corner[0], corner[0] + size[0])
                    * interval_overlap(j as f64, corner[1], corner[1] + size[1]);
            }
        }
        Element::Glyph { origin, bitmap, scale, .. } => {
            for (r, row) in bitmap.iter().enumerate() {
                for (c, ch) in row.chars().enumerate() {
                    if ch != '#' {
                        continue;
                    }
                    for a in 0..*scale {
                        for b in 0..*scale {
                            m[[origin[0] + r * scale + a, origin[1] + c * scale + b]] = 1.0;
                        }
                    }
                }
            }
        }
    }
    m
}

fn element_values(e: &Element) -> (f64, f64) {
    match e {
        Element::Disc { phi, mu, .. } | Element::Rectangle { phi, mu, .. } | Element::Glyph { phi, mu, .. } => {
            (*phi, *mu)
        }
    }
}

pub fn render_phantom2d(spec: &PhantomSpec2D) -> Result<Object2D> {
    spec.validate()?;
    let mut f = Array2::<Complex64>::zeros((spec.shape[0], spec.shape[1]));
    let sign = if spec.negate { -1.0 } else { 1.0 };
    for e in &spec.elements {
        let (phi, mu) = element_values(e);
        let value = Complex64::new(phi, -0.5 * mu) * sign;
        let mask = element_mask(spec.shape, e);
        f.zip_mut_with(&mask, |z, m| *z += value * *m);
    }
    Ok(Object2D::new(f))
}

/// Identical spheres given by their centers in voxel coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpherePacking {
    pub centers: Vec<[f64; 3]>,
    pub radius: f64,
    pub delta_value: f64,
    #[serde(default)]
    pub beta_value: f64,
}

impl SpherePacking {
    /// Spheres must lie inside the volume and keep center distances of at
    /// least `2 r (1 - overlap_tol)`.
    pub fn validate(&self, vol_shape: (usize, usize, usize), overlap_tol: f64) -> Result<()> {
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(Error::InvalidArgument(format!("sphere radius must be positive, got {}", self.radius)));
        }
        if !(self.delta_value.is_finite() && self.beta_value.is_finite()) {
            return Err(Error::NonFinite("sphere values"));
        }
        let dims = [vol_shape.0, vol_shape.1, vol_shape.2];
        for (k, c) in self.centers.iter().enumerate() {
            for a in 0..3 {
                if c[a] - self.radius < -0.5 || c[a] + self.radius > dims[a] as f64 - 0.5 {
                    return Err(Error::InvalidArgument(format!("sphere {k} leaves the volume")));
                }
            }
        }
        let min_d = 2.0 * self.radius * (1.0 - overlap_tol);
        for i in 0..self.centers.len() {
            for j in i + 1..self.centers.len() {
                if dist(&self.centers[i], &self.centers[j]) < min_d {
                    return Err(Error::InvalidArgument(format!("spheres {i} and {j} overlap")));
                }
            }
        }
        Ok(())
    }
}

pub fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lattice {
    Hcp,
    Fcc,
}

/// Close-packed spheres of radius `radius` touching their neighbors.
/// Layers stack along axis 0; each layer is a triangular lattice in the
/// plane of axes 1 and 2. `counts` = (layers, rows, spheres per row).
pub fn close_packed(lattice: Lattice, counts: [usize; 3], radius: f64, origin: [f64; 3]) -> Vec<[f64; 3]> {
    let d = 2.0 * radius;
    let row_step = d * 3f64.sqrt() / 2.0;
    let layer_step = d * (2.0f64 / 3.0).sqrt();
    // In-plane shift of the B (and C) layer relative to A.
    let shift = [d / 2.0, d / (2.0 * 3f64.sqrt())];
    let mut out = Vec::with_capacity(counts.iter().product());
    for l in 0..counts[0] {
        let phase = match lattice {
            Lattice::Hcp => l % 2,
            Lattice::Fcc => l % 3,
        } as f64;
        for r in 0..counts[1] {
            for c in 0..counts[2] {
                let y = r as f64 * row_step + phase * shift[1];
                let x = c as f64 * d + if r % 2 == 1 { d / 2.0 } else { 0.0 } + phase * shift[0];
                out.push([origin[0] + l as f64 * layer_step, origin[1] + y, origin[2] + x]);
            }
        }
    }
    out
}

/// Random sequential addition of up to `n` non-overlapping spheres with
/// at least `gap` voxels between surfaces.
pub fn random_packing(
    n: usize,
    radius: f64,
    gap: f64,
    vol_shape: (usize, usize, usize),
    seed: u64,
    max_attempts: usize,
) -> Vec<[f64; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = [vol_shape.0 as f64, vol_shape.1 as f64, vol_shape.2 as f64];
    let mut out: Vec<[f64; 3]> = Vec::with_capacity(n);
    let mut attempts = 0;
    while out.len() < n && attempts < max_attempts {
        attempts += 1;
        let mut c = [0.0; 3];
        for a in 0..3 {
            let lo = radius - 0.5;
            let hi = dims[a] - 0.5 - radius;
            if hi <= lo {
                return out;
            }
            c[a] = lo + rng.random::<f64>() * (hi - lo);
        }
        if out.iter().all(|o| dist(o, &c) >= 2.0 * radius + gap) {
            out.push(c);
        }
    }
    out
}

/// Adds i.i.d. Gaussian displacements of standard deviation `sigma`.
pub fn jitter(centers: &[[f64; 3]], sigma: f64, seed: u64) -> Result<Vec<[f64; 3]>> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!("jitter must be >= 0, got {sigma}")));
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(centers.iter().map(|c| [0, 1, 2].map(|a| c[a] + normal.sample(&mut rng))).collect())
}

/// Keeps the spheres lying entirely inside the volume.
pub fn truncate_to_volume(centers: &[[f64; 3]], radius: f64, vol_shape: (usize, usize, usize)) -> Vec<[f64; 3]> {
    let dims = [vol_shape.0 as f64, vol_shape.1 as f64, vol_shape.2 as f64];
    centers
        .iter()
        .filter(|c| (0..3).all(|a| c[a] - radius >= -0.5 && c[a] + radius <= dims[a] - 0.5))
        .copied()
        .collect()
}

const AA3: usize = 6;

fn sphere_fraction(d: [f64; 3], radius: f64) -> f64 {
    let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    if r <= radius - 0.87 {
        return 1.0;
    }
    if r >= radius + 0.87 {
        return 0.0;
    }
    let mut hits = 0;
    let s = |k: usize| -0.5 + (k as f64 + 0.5) / AA3 as f64;
    for a in 0..AA3 {
        for b in 0..AA3 {
            for c in 0..AA3 {
                let p = [d[0] + s(a), d[1] + s(b), d[2] + s(c)];
                if p[0] * p[0] + p[1] * p[1] + p[2] * p[2] < radius * radius {
                    hits += 1;
                }
            }
        }
    }
    hits as f64 / (AA3 * AA3 * AA3) as f64
}

/// Renders `delta - i beta` with boundary anti-aliasing.
pub fn render_packing(packing: &SpherePacking, vol_shape: (usize, usize, usize)) -> Result<Volume3D> {
    packing.validate(vol_shape, 1e-6)?;
    let mut v = Array3::<Complex64>::zeros(vol_shape);
    let value = Complex64::new(packing.delta_value, -packing.beta_value);
    let dims = [vol_shape.0, vol_shape.1, vol_shape.2];
    let r = packing.radius;
    for c in &packing.centers {
        let lo = |a: usize| ((c[a] - r - 1.0).floor().max(0.0)) as usize;
        let hi = |a: usize| ((c[a] + r + 1.0).ceil() as usize).min(dims[a] - 1);
        for i in lo(0)..=hi(0) {
            for j in lo(1)..=hi(1) {
                for k in lo(2)..=hi(2) {
                    let w = sphere_fraction([i as f64 - c[0], j as f64 - c[1], k as f64 - c[2]], r);
                    if w > 0.0 {
                        v[[i, j, k]] += value * w;
                    }
                }
            }
        }
    }
    Ok(Volume3D::new(v))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseKind {
    Gaussian { sigma: f64 },
    /// Photon counts at expectation `peak_flux * I`, rescaled by `1/peak_flux`.
    Poisson { peak_flux: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    #[serde(default)]
    pub seed: u64,
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        match self.kind {
            NoiseKind::Gaussian { sigma } if sigma.is_finite() && sigma >= 0.0 => Ok(()),
            NoiseKind::Poisson { peak_flux } if peak_flux.is_finite() && peak_flux > 0.0 => Ok(()),
            NoiseKind::Gaussian { sigma } => {
                Err(Error::InvalidArgument(format!("noise sigma must be >= 0, got {sigma}")))
            }
            NoiseKind::Poisson { peak_flux } => {
                Err(Error::InvalidArgument(format!("peak flux must be positive, got {peak_flux}")))
            }
        }
    }
}

/// Noisy copy of `intensity` and the realized noise norm `||I_noisy - I||`.
pub fn add_noise<D: Dimension>(intensity: &Array<f64, D>, model: &NoiseModel) -> Result<(Array<f64, D>, f64)> {
    model.validate()?;
    if intensity.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("intensity"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
    let noisy = match model.kind {
        NoiseKind::Gaussian { sigma } => {
            if sigma == 0.0 {
                intensity.clone()
            } else {
                let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
                intensity.mapv(|v| v + normal.sample(&mut rng))
            }
        }
        NoiseKind::Poisson { peak_flux } => {
            if intensity.iter().any(|v| *v < 0.0) {
                return Err(Error::InvalidArgument("Poisson noise needs nonnegative intensities".into()));
            }
            let mut out = intensity.clone();
            for v in out.iter_mut() {
                let lambda = *v * peak_flux;
                let counts = if lambda > 0.0 {
                    Poisson::new(lambda).map_err(|e| Error::InvalidArgument(e.to_string()))?.sample(&mut rng)
                } else {
                    0.0
                };
                *v = counts / peak_flux;
            }
            out
        }
    };
    let norm = noisy.iter().zip(intensity.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    Ok((noisy, norm))
}
