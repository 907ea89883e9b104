mod common;

use std::f64::consts::PI;

use common::*;
use ndarray::{Array2, Array3, Zip};
use num_complex::Complex64;
use phasenewton::gridmath::{fft_freq, weighted_inner, Direction, FresnelPropagator};
use phasenewton::operators::*;
use phasenewton::phantom::{render_packing, SpherePacking};
use phasenewton::{GramianSpec, ImagingGeometry, Padding};
use rustfft::FftPlanner;

/// Separable continuous propagation of `exp(-r^2 / (2 w^2))` under the
/// multiplier `exp(i sign pi xi^2 / N_F)`, evaluated at pixel offsets from the center.
fn gaussian_oracle(n: usize, w: f64, nf: f64, sign: f64) -> Array2<Complex64> {
    let a = Complex64::new(2.0 * PI * PI * w * w, -sign * PI / nf);
    let c = n as f64 / 2.0;
    let axis = |x: f64| (w * (2.0 * PI).sqrt()) * (Complex64::from(PI) / a).sqrt() * (-(PI * PI * x * x) / a).exp();
    Array2::from_shape_fn((n, n), |(i, j)| axis(i as f64 - c) * axis(j as f64 - c))
}

fn gaussian(n: usize, w: f64) -> Array2<Complex64> {
    let c = n as f64 / 2.0;
    Array2::from_shape_fn((n, n), |(i, j)| {
        let r2 = (i as f64 - c).powi(2) + (j as f64 - c).powi(2);
        Complex64::from((-r2 / (2.0 * w * w)).exp())
    })
}

fn rms(a: &Array2<Complex64>, b: &Array2<Complex64>) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>() / a.len() as f64).sqrt()
}

#[test]
fn gaussian_beam_matches_closed_form() {
    let (n, w, nf) = (128, 6.0, 0.01);
    let p = FresnelPropagator::new((n, n), ImagingGeometry::new(nf).unwrap(), Padding::None).unwrap();
    let psi = gaussian(n, w);
    assert!(rms(&p.propagate(&psi, Direction::Forward), &gaussian_oracle(n, w, nf, 1.0)) < 1e-6);
    assert!(rms(&p.propagate(&psi, Direction::Inverse), &gaussian_oracle(n, w, nf, -1.0)) < 1e-6);
}

#[test]
fn propagator_unitary_and_inverse_on_odd_grid() {
    let mut r = rng(4);
    let psi = cfield((33, 20), 1.0, &mut r);
    let p = FresnelPropagator::new((33, 20), ImagingGeometry::new(0.003).unwrap(), Padding::None).unwrap();
    let fwd = p.propagate(&psi, Direction::Forward);
    assert!(rel_err(norm2c(&fwd), norm2c(&psi)) < 1e-12);
    let back = p.propagate(&fwd, Direction::Inverse);
    assert!(norm2c(&(&back - &psi)) / norm2c(&psi) < 1e-12);
    let adj = p.adjoint(&psi, Direction::Forward);
    assert!(norm2c(&(&adj - &p.propagate(&psi, Direction::Inverse))) < 1e-12);
}

#[test]
fn pc_adjoint_pairing_with_gramians() {
    let mut r = rng(10);
    let geom = ImagingGeometry::new(0.02).unwrap();
    let shape = (24, 30);
    let obj = Object2D::new(cfield(shape, 0.3, &mut r));
    let weights = Array2::from_shape_fn(shape, |(i, j)| 0.5 + ((i * 7 + j * 3) % 5) as f64 * 0.3);
    let cases = [
        (GramianSpec::Identity, GramianSpec::Identity),
        (GramianSpec::Sobolev(0.5), GramianSpec::Identity),
        (GramianSpec::Sobolev(1.5), GramianSpec::Weighted(weights)),
    ];
    for (gx, gy) in &cases {
        for _ in 0..5 {
            let h = cfield(shape, 1.0, &mut r);
            let g = rfield(shape, &mut r);
            let jh = pc_derivative(&obj, &h, &geom).unwrap();
            let lhs = weighted_inner(&jh.mapv(Complex64::from), &g.mapv(Complex64::from), gy).unwrap().re;
            let adj = pc_adjoint(&obj, &g, &geom, gx, gy).unwrap();
            let rhs = weighted_inner(&h, &adj, gx).unwrap().re;
            assert!(rel_err(lhs, rhs) < 1e-10, "{gx:?} {gy:?}: {lhs} vs {rhs}");
        }
    }
}

#[test]
fn padded_linearization_transpose() {
    let mut r = rng(11);
    let shape = (20, 28);
    let op = PhaseContrastOperator::new(shape, ImagingGeometry::new(0.01).unwrap(), Padding::Replicate).unwrap();
    let f = cfield(shape, 0.4, &mut r);
    let lin = op.linearize(&f).unwrap();
    for _ in 0..5 {
        let h = cfield(shape, 1.0, &mut r);
        let g = rfield(shape, &mut r);
        let lhs: f64 = lin.apply(&h).iter().zip(&g).map(|(a, b)| a * b).sum();
        let rhs = rdot2(&h, &lin.apply_transpose(&g));
        assert!(rel_err(lhs, rhs) < 1e-10);
    }
}

fn taylor_ratio(remainder: impl Fn(f64) -> f64) -> f64 {
    remainder(1e-2) / remainder(1e-3)
}

#[test]
fn pc_taylor_remainder_is_quadratic() {
    let mut r = rng(12);
    for padding in [Padding::None, Padding::Replicate] {
        let shape = (32, 32);
        let op = PhaseContrastOperator::new(shape, ImagingGeometry::new(0.02).unwrap(), padding).unwrap();
        let f = cfield(shape, 0.5, &mut r);
        let h = cfield(shape, 1.0, &mut r);
        let base = op.forward(&f).unwrap();
        let jh = op.linearize(&f).unwrap().apply(&h);
        let ratio = taylor_ratio(|t| {
            let ft = &f + &h.mapv(|z| z * t);
            let d = op.forward(&ft).unwrap() - &base - jh.mapv(|v| v * t);
            d.mapv(|v| v * v).sum().sqrt()
        });
        assert!((75.0..=125.0).contains(&ratio), "{padding:?}: ratio {ratio}");
    }
}

#[test]
fn derivative_at_zero_is_ctf() {
    let mut r = rng(13);
    let (n0, n1) = (40, 36);
    let geom = ImagingGeometry::new(0.015).unwrap();
    let phi = rfield((n0, n1), &mut r);
    let mu = rfield((n0, n1), &mut r);
    let h = Object2D::from_phase_absorption(&phi, &mu).unwrap().f;
    let lin = pc_derivative(&Object2D::zeros((n0, n1)), &h, &geom).unwrap();

    // Independent evaluation with an unnormalized 2-D DFT built from 1-D plans.
    let mut planner = FftPlanner::new();
    let dft2 = |a: &Array2<Complex64>, inverse: bool, planner: &mut FftPlanner<f64>| {
        let mut out = a.clone();
        for ax in 0..2 {
            let len = out.shape()[ax];
            let plan = if inverse { planner.plan_fft_inverse(len) } else { planner.plan_fft_forward(len) };
            for mut lane in out.lanes_mut(ndarray::Axis(ax)) {
                let mut buf: Vec<Complex64> = lane.iter().copied().collect();
                plan.process(&mut buf);
                lane.iter_mut().zip(buf).for_each(|(d, s)| *d = s);
            }
        }
        out
    };
    let p_hat = dft2(&phi.mapv(Complex64::from), false, &mut planner);
    let m_hat = dft2(&mu.mapv(Complex64::from), false, &mut planner);
    let mut spec = Array2::<Complex64>::zeros((n0, n1));
    for ((i, j), s) in spec.indexed_iter_mut() {
        let x2 = fft_freq(i, n0).powi(2) + fft_freq(j, n1).powi(2);
        let chi = PI * x2 / 0.015;
        *s = 2.0 * chi.sin() * p_hat[[i, j]] - chi.cos() * m_hat[[i, j]];
    }
    let expect = dft2(&spec, true, &mut planner).mapv(|z| z.re / (n0 * n1) as f64);
    let err = (&lin - &expect).mapv(|v| v * v).sum().sqrt() / expect.mapv(|v| v * v).sum().sqrt();
    assert!(err < 1e-10, "relative error {err}");

    let ctf = ctf_apply(&phi, &mu, &geom).unwrap();
    assert!((&ctf - &expect).iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn homogeneous_ctf_inversion_recovers_weak_phase() {
    let mut r = rng(14);
    let geom = ImagingGeometry::new(0.02).unwrap();
    let c = 0.21;
    let phi = rfield((32, 32), &mut r);
    let data = ctf_apply(&phi, &phi.mapv(|v| c * v), &geom).unwrap().mapv(|v| v + 1.0);
    let rec = ctf_invert_homogeneous(&data, c, &geom, 1e-12).unwrap();
    let err = (&rec - &phi).mapv(|v| v * v).sum().sqrt() / phi.mapv(|v| v * v).sum().sqrt();
    assert!(err < 1e-6, "relative error {err}");
    assert!(ctf_invert_homogeneous(&data, c, &geom, 0.0).is_err());
}

#[test]
fn ctf_predicts_weak_object_intensity() {
    let mut r = rng(15);
    let geom = ImagingGeometry::new(0.02).unwrap();
    let phi = rfield((32, 32), &mut r).mapv(|v| v * 1e-4);
    let mu = rfield((32, 32), &mut r).mapv(|v| v * 1e-4);
    let exact = pc_forward(&Object2D::from_phase_absorption(&phi, &mu).unwrap(), &geom).unwrap() - 1.0;
    let lin = ctf_apply(&phi, &mu, &geom).unwrap();
    let err = (&exact - &lin).mapv(|v| v * v).sum().sqrt() / lin.mapv(|v| v * v).sum().sqrt();
    assert!(err < 1e-3, "relative error {err}");
}

#[test]
fn forward_of_vacuum_is_flat() {
    let geom = ImagingGeometry::new(0.01).unwrap();
    let i = pc_forward(&Object2D::zeros((16, 16)), &geom).unwrap();
    assert!(i.iter().all(|v| (v - 1.0).abs() < 1e-14));
}

#[test]
fn radon_transpose_pairing() {
    let mut r = rng(16);
    let shape = (5, 17, 14);
    let vol = cvol(shape, 1.0, &mut r);
    let angles = [0.0, 0.4, 1.3, 2.9, PI / 2.0];
    let proj = radon(&vol, &angles, 0.7).unwrap();
    let g = cvol(proj.dim(), 1.0, &mut r);
    let lhs = rdot3(&proj, &g);
    let rhs = rdot3(&vol, &backproject(&g, &angles, shape, 0.7).unwrap());
    assert!(rel_err(lhs, rhs) < 1e-12);
}

fn ball(n: usize, radius: f64) -> Array3<f64> {
    let c = (n as f64 - 1.0) / 2.0;
    let p = SpherePacking { centers: vec![[c, c, c]], radius, delta_value: 1.0, beta_value: 0.0 };
    render_packing(&p, (n, n, n)).unwrap().delta()
}

#[test]
fn centered_ball_projects_to_chord_lengths() {
    let (n, radius) = (33, 10.0);
    let vol = ball(n, radius);
    let angles: Vec<f64> = (0..7).map(|k| k as f64 * PI / 7.0).collect();
    let proj = radon(&vol, &angles, 1.0).unwrap();
    let c = (n as f64 - 1.0) / 2.0;
    // chord length averaged over the detector pixel footprint
    let chord = |t: f64| {
        let k = 16;
        let mut acc = 0.0;
        for a in 0..k {
            for b in 0..k {
                let u = (a as f64 + 0.5) / k as f64 - 0.5;
                let v = t + (b as f64 + 0.5) / k as f64 - 0.5;
                acc += 2.0 * (radius * radius - u * u - v * v).max(0.0).sqrt();
            }
        }
        acc / (k * k) as f64
    };
    for a in 0..angles.len() {
        for j in 0..n {
            let t = j as f64 - c;
            let expect = chord(t);
            let got = proj[[a, n / 2, j]];
            // interpolation blurs the rim at oblique angles
            let tol = if t.abs() < radius - 1.5 { 0.25 } else { 1.0 };
            assert!((got - expect).abs() < tol, "angle {a} t {t}: {got} vs {expect}");
        }
    }
    // rotation invariance of a centered ball
    for a in 1..angles.len() {
        let row0: f64 = (0..n).map(|j| proj[[0, n / 2, j]]).sum();
        let row: f64 = (0..n).map(|j| proj[[a, n / 2, j]]).sum();
        assert!(rel_err(row, row0) < 1e-2);
        for j in 0..n {
            if (j as f64 - c).abs() < radius - 1.5 {
                assert!((proj[[a, n / 2, j]] - proj[[0, n / 2, j]]).abs() < 0.3);
            }
        }
    }
}

#[test]
fn projection_preserves_mass() {
    let vol = ball(24, 6.0);
    let mass = vol.sum() * 0.5;
    let proj = radon(&vol, &[0.0, 0.3, PI / 4.0, PI / 2.0, 2.0], 0.5).unwrap();
    for a in 0..5 {
        let m = proj.index_axis(ndarray::Axis(0), a).sum();
        assert!(rel_err(m, mass) < 1e-2, "angle {a}: {m} vs {mass}");
    }
}

#[test]
fn quarter_turn_is_exact_permutation() {
    let mut r = rng(17);
    let vol = Array3::from_shape_fn((3, 9, 9), |_| rand::Rng::random::<f64>(&mut r));
    let p = radon(&vol, &[PI / 2.0], 1.0).unwrap();
    // at 90 degrees rays run along axis 1
    for a in 0..3 {
        let sums: Vec<f64> = (0..9).map(|k| (0..9).map(|j| vol[[a, j, k]]).sum()).collect();
        let row: Vec<f64> = (0..9).map(|j| p[[0, a, j]]).collect();
        let mut fwd = sums.clone();
        let mut rev = sums.clone();
        rev.reverse();
        fwd.iter_mut().zip(&row).for_each(|(s, r)| *s -= r);
        rev.iter_mut().zip(&row).for_each(|(s, r)| *s -= r);
        let ok = fwd.iter().all(|v| v.abs() < 1e-12) || rev.iter().all(|v| v.abs() < 1e-12);
        assert!(ok, "slice {a}: {row:?} vs {sums:?}");
    }
}

#[test]
fn tomo_adjoint_and_taylor() {
    let mut r = rng(18);
    let shape = (8, 12, 12);
    let angles = [0.0, 0.7, 1.9];
    let geom = ImagingGeometry::new(0.05).unwrap();
    let vol = Volume3D::new(cvol(shape, 0.05, &mut r));
    for _ in 0..3 {
        let h = cvol(shape, 1.0, &mut r);
        let jh = tomo_derivative(&vol, &h, &angles, &geom, 2.0).unwrap();
        let g = Array3::from_shape_fn(jh.dim(), |_| rand::Rng::random::<f64>(&mut r) - 0.5);
        let lhs: f64 = jh.iter().zip(&g).map(|(a, b)| a * b).sum();
        let rhs = rdot3(&h, &tomo_adjoint(&vol, &g, &angles, &geom, 2.0).unwrap().v);
        assert!(rel_err(lhs, rhs) < 1e-10);
    }
    let h = cvol(shape, 1.0, &mut r);
    let base = tomo_forward(&vol, &angles, &geom, 2.0).unwrap().frames;
    let jh = tomo_derivative(&vol, &h, &angles, &geom, 2.0).unwrap();
    let ratio = taylor_ratio(|t| {
        let v = Volume3D::new(&vol.v + &h.mapv(|z| z * t));
        let d = tomo_forward(&v, &angles, &geom, 2.0).unwrap().frames - &base - jh.mapv(|x| x * t);
        d.mapv(|x| x * x).sum().sqrt()
    });
    assert!((75.0..=125.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn tomo_forward_of_zero_angle_matches_2d_model() {
    let mut r = rng(19);
    let shape = (10, 12, 7);
    let vol = Volume3D::new(cvol(shape, 0.05, &mut r));
    let geom = ImagingGeometry::new(0.03).unwrap();
    let frames = tomo_forward(&vol, &[0.0], &geom, 1.5).unwrap().frames;
    let mut f = Array2::<Complex64>::zeros((10, 12));
    Zip::indexed(&mut f).for_each(|(a, b), z| *z = (0..7).map(|c| vol.v[[a, b, c]]).sum::<Complex64>() * 1.5);
    let expect = pc_forward(&Object2D::new(f), &geom).unwrap();
    assert!((&frames.index_axis(ndarray::Axis(0), 0) - &expect).iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn shape_mismatches_are_rejected() {
    let geom = ImagingGeometry::new(0.01).unwrap();
    let obj = Object2D::zeros((8, 8));
    assert!(pc_derivative(&obj, &Array2::zeros((8, 9)), &geom).is_err());
    assert!(pc_adjoint(&obj, &Array2::zeros((9, 8)), &geom, &GramianSpec::Identity, &GramianSpec::Identity).is_err());
    let vol = Volume3D::zeros((4, 4, 4));
    assert!(tomo_adjoint(&vol, &Array3::zeros((2, 4, 4)), &[0.0], &geom, 1.0).is_err());
}
