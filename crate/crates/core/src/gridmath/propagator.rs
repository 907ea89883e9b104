//! Fresnel propagation as a Fourier multiplier.
//!
//! The forward multiplier is `exp(+i pi |xi|^2 / N_F)`. Together with the
//! object transmission `exp(-i f)` this orientation makes the linearized
//! intensity equal `2 sin(pi xi^2/N_F) F(phi) - cos(pi xi^2/N_F) F(mu)`.

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{Fft2Plan, FrequencyGrid, ImagingGeometry};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    /// Periodic boundary conditions on the image grid itself.
    #[default]
    None,
    /// Pad to twice the size per axis by replicating edge values, crop after.
    Replicate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Prepared propagator for one image shape. Immutable after construction.
#[derive(Debug, Clone)]
pub struct FresnelPropagator {
    geom: ImagingGeometry,
    shape: (usize, usize),
    padding: Padding,
    padded: (usize, usize),
    offset: (usize, usize),
    plan: Fft2Plan,
    kernel: Array2<Complex64>,
}

impl FresnelPropagator {
    pub fn new(shape: (usize, usize), geom: ImagingGeometry, padding: Padding) -> Result<Self> {
        geom.validate()?;
        if shape.0 == 0 || shape.1 == 0 {
            return Err(Error::InvalidArgument("empty image shape".into()));
        }
        let (padded, offset) = match padding {
            Padding::None => (shape, (0, 0)),
            Padding::Replicate => ((2 * shape.0, 2 * shape.1), (shape.0 / 2, shape.1 / 2)),
        };
        let grid = FrequencyGrid::new(padded.0, padded.1);
        let kernel = Array2::from_shape_fn(padded, |(i, j)| {
            Complex64::from_polar(1.0, geom.chirp_phase(grid.xi_sq(i, j)))
        });
        Ok(Self {
            geom,
            shape,
            padding,
            padded,
            offset,
            plan: Fft2Plan::new(padded.0, padded.1),
            kernel,
        })
    }

    pub fn geometry(&self) -> &ImagingGeometry {
        &self.geom
    }

    pub fn shape(&self) -> (usize, usize) {
        self.shape
    }

    pub fn padding(&self) -> Padding {
        self.padding
    }

    fn check(&self, psi: &Array2<Complex64>) {
        assert_eq!(psi.dim(), self.shape, "propagator shape mismatch");
    }

    fn pad(&self, psi: &Array2<Complex64>) -> Array2<Complex64> {
        match self.padding {
            Padding::None => psi.as_standard_layout().into_owned(),
            Padding::Replicate => {
                let (r, c) = self.shape;
                let (or, oc) = self.offset;
                Array2::from_shape_fn(self.padded, |(i, j)| {
                    let si = (i as isize - or as isize).clamp(0, r as isize - 1) as usize;
                    let sj = (j as isize - oc as isize).clamp(0, c as isize - 1) as usize;
                    psi[[si, sj]]
                })
            }
        }
    }

    /// Transpose of [`Self::pad`]: every padded sample is added back onto
    /// the edge pixel it replicates.
    fn pad_transpose(&self, big: &Array2<Complex64>) -> Array2<Complex64> {
        match self.padding {
            Padding::None => big.clone(),
            Padding::Replicate => {
                let (r, c) = self.shape;
                let (or, oc) = self.offset;
                let mut out = Array2::zeros(self.shape);
                for ((i, j), v) in big.indexed_iter() {
                    let si = (i as isize - or as isize).clamp(0, r as isize - 1) as usize;
                    let sj = (j as isize - oc as isize).clamp(0, c as isize - 1) as usize;
                    out[[si, sj]] += *v;
                }
                out
            }
        }
    }

    fn crop(&self, big: Array2<Complex64>) -> Array2<Complex64> {
        match self.padding {
            Padding::None => big,
            Padding::Replicate => {
                let (or, oc) = self.offset;
                Array2::from_shape_fn(self.shape, |(i, j)| big[[i + or, j + oc]])
            }
        }
    }

    fn crop_transpose(&self, small: &Array2<Complex64>) -> Array2<Complex64> {
        match self.padding {
            Padding::None => small.as_standard_layout().into_owned(),
            Padding::Replicate => {
                let (or, oc) = self.offset;
                let mut out = Array2::zeros(self.padded);
                for ((i, j), v) in small.indexed_iter() {
                    out[[i + or, j + oc]] = *v;
                }
                out
            }
        }
    }

    fn multiply(&self, spec: &mut Array2<Complex64>, conjugate: bool) {
        ndarray::Zip::from(spec).and(&self.kernel).for_each(|s, k| {
            *s *= if conjugate { k.conj() } else { *k };
        });
    }

    /// Applies the (padded) propagator in the given direction.
    pub fn propagate(&self, psi: &Array2<Complex64>, direction: Direction) -> Array2<Complex64> {
        self.check(psi);
        let mut work = self.pad(psi);
        self.plan.forward_inplace(&mut work);
        self.multiply(&mut work, direction == Direction::Inverse);
        self.plan.inverse_inplace(&mut work);
        self.crop(work)
    }

    /// Euclidean adjoint of [`Self::propagate`] in the given direction.
    /// Without padding this coincides with propagation in the opposite direction.
    pub fn adjoint(&self, psi: &Array2<Complex64>, direction: Direction) -> Array2<Complex64> {
        self.check(psi);
        let mut work = self.crop_transpose(psi);
        self.plan.forward_inplace(&mut work);
        self.multiply(&mut work, direction == Direction::Forward);
        self.plan.inverse_inplace(&mut work);
        self.pad_transpose(&work)
    }
}

/// One-shot unpadded propagation `F^-1(exp(+-i pi xi^2/N_F) F(psi))`.
pub fn fresnel_propagate(
    psi: &Array2<Complex64>,
    geom: &ImagingGeometry,
    direction: Direction,
) -> Result<Array2<Complex64>> {
    let p = FresnelPropagator::new(psi.dim(), *geom, Padding::None)?;
    Ok(p.propagate(psi, direction))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(shape: (usize, usize), seed: u64) -> Array2<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn(shape, |_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
    }

    fn norm(a: &Array2<Complex64>) -> f64 {
        a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    fn cdot(a: &Array2<Complex64>, b: &Array2<Complex64>) -> Complex64 {
        a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
    }

    #[test]
    fn constant_field_is_invariant() {
        let g = ImagingGeometry::new(1e-3).unwrap();
        let c = Complex64::new(0.3, -1.2);
        let psi = Array2::from_elem((16, 12), c);
        let out = fresnel_propagate(&psi, &g, Direction::Forward).unwrap();
        for v in out.iter() {
            assert!((v - c).norm() < 1e-13);
        }
    }

    #[test]
    fn unitary_and_invertible() {
        let g = ImagingGeometry::new(0.05).unwrap();
        let psi = random_field((32, 48), 7);
        let fwd = fresnel_propagate(&psi, &g, Direction::Forward).unwrap();
        assert!((norm(&fwd) - norm(&psi)).abs() <= 1e-12 * norm(&psi));
        let back = fresnel_propagate(&fwd, &g, Direction::Inverse).unwrap();
        assert!(norm(&(&back - &psi)) <= 1e-12 * norm(&psi));
    }

    #[test]
    fn semigroup_halving_fresnel_number() {
        let nf = 0.02;
        let psi = random_field((32, 32), 9);
        let once = fresnel_propagate(&psi, &ImagingGeometry::new(nf).unwrap(), Direction::Forward).unwrap();
        let twice = fresnel_propagate(&once, &ImagingGeometry::new(nf).unwrap(), Direction::Forward).unwrap();
        let direct = fresnel_propagate(&psi, &ImagingGeometry::new(nf / 2.0).unwrap(), Direction::Forward).unwrap();
        assert!(norm(&(&twice - &direct)) <= 1e-10 * norm(&direct));
    }

    #[test]
    fn padded_adjoint_is_transpose() {
        let g = ImagingGeometry::new(0.01).unwrap();
        for padding in [Padding::None, Padding::Replicate] {
            let p = FresnelPropagator::new((12, 10), g, padding).unwrap();
            let x = random_field((12, 10), 1);
            let y = random_field((12, 10), 2);
            for dir in [Direction::Forward, Direction::Inverse] {
                let lhs = cdot(&y, &p.propagate(&x, dir));
                let rhs = cdot(&p.adjoint(&y, dir), &x);
                assert!((lhs - rhs).norm() <= 1e-12 * lhs.norm().max(1.0), "{padding:?} {dir:?}");
            }
        }
    }

    #[test]
    fn replicate_padding_of_constant_field_is_exact() {
        let g = ImagingGeometry::new(0.01).unwrap();
        let p = FresnelPropagator::new((10, 14), g, Padding::Replicate).unwrap();
        let psi = Array2::from_elem((10, 14), Complex64::new(1.0, 0.0));
        for v in p.propagate(&psi, Direction::Forward).iter() {
            assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn invalid_geometry_rejected() {
        let g = ImagingGeometry { fresnel_number: 0.0, pixel_size: 1.0, defocus: None, wavenumber: None };
        let psi = random_field((4, 4), 0);
        assert!(matches!(fresnel_propagate(&psi, &g, Direction::Forward), Err(Error::InvalidGeometry(_))));
    }
}
