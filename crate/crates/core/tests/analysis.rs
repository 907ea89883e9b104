mod common;

use std::f64::consts::PI;

use common::rng;
use ndarray::Array3;
use phasenewton::analysis::*;
use phasenewton::phantom::{add_noise, random_packing, render_packing, NoiseKind, NoiseModel, SpherePacking};
use rand::Rng;

fn white(shape: (usize, usize, usize), seed: u64) -> Array3<f64> {
    let mut r = rng(seed);
    Array3::from_shape_fn(shape, |_| r.random::<f64>() - 0.5)
}

fn blob(shape: (usize, usize, usize), c: [f64; 3], sigma: f64, amp: f64) -> Array3<f64> {
    Array3::from_shape_fn(shape, |(i, j, k)| {
        let d2 = (i as f64 - c[0]).powi(2) + (j as f64 - c[1]).powi(2) + (k as f64 - c[2]).powi(2);
        amp * (-d2 / (2.0 * sigma * sigma)).exp()
    })
}

#[test]
fn self_correlation_is_one() {
    let v = white((16, 20, 18), 1);
    let c = fsc(&v, &v, 8).unwrap();
    assert!(c.correlation.iter().all(|x| (x - 1.0).abs() < 1e-12));
    assert_eq!(c.len(), 8);
    assert!((c.shell_width() - 0.5 / 8.0).abs() < 1e-15);
}

#[test]
fn independent_noise_stays_in_band() {
    let shape = (40, 40, 40);
    let c = fsc(&white(shape, 2), &white(shape, 3), 20).unwrap();
    let inside = c.correlation.iter().zip(&c.shell_counts).filter(|(x, n)| x.abs() <= 3.0 / (**n as f64).sqrt()).count();
    assert!(inside as f64 >= 0.95 * c.len() as f64, "{inside} of {}", c.len());
}

#[test]
fn fsc_rejects_bad_input() {
    let v = white((8, 8, 8), 4);
    assert!(fsc(&v, &white((8, 8, 9), 5), 4).is_err());
    assert!(fsc(&v, &v, 3).is_err());
    assert!(fsc(&v, &v, 64).is_err());
}

#[test]
fn half_bit_threshold_formula() {
    let counts = [1usize, 10, 100, 12345];
    let t = half_bit_threshold(&counts);
    for (n, t) in counts.iter().zip(t) {
        let s = (*n as f64).sqrt();
        let want = (0.2071 * s + 1.9102) / (1.2071 * s + 0.9102);
        assert!((t - want).abs() < 1e-14);
    }
}

fn curve(correlation: Vec<f64>, threshold: Vec<f64>) -> FscCurve {
    let n = correlation.len();
    FscCurve {
        shell_centers: (0..n).map(|s| (s as f64 + 0.5) * 0.5 / n as f64).collect(),
        shell_counts: vec![100; n],
        zero_energy: vec![false; n],
        correlation,
        threshold,
    }
}

#[test]
fn resolution_interpolates_first_crossing() {
    let c = curve(vec![1.0, 0.9, 0.6, 0.2, 0.5, 0.1], vec![0.4; 6]);
    let res = resolution_from_fsc(&c, 10.0);
    // crossing between shells 2 and 3, one quarter of the way
    let f = c.shell_centers[2] + 0.5 * (c.shell_centers[3] - c.shell_centers[2]);
    assert!((res.frequency - f).abs() < 1e-14);
    assert!((res.half_period - 10.0 / (2.0 * f)).abs() < 1e-12);
    assert!(!res.nyquist_limited);

    let flat = resolution_from_fsc(&curve(vec![0.9; 6], vec![0.4; 6]), 3.0);
    assert!(flat.nyquist_limited);
    assert_eq!(flat.half_period, 3.0);
}

#[test]
fn form_factor_values() {
    assert_eq!(sphere_form_factor(0.0), 1.0);
    for x in [0.5f64, 1.0, 2.0, 7.0] {
        assert!((sphere_form_factor(x) - 3.0 * (x.sin() - x * x.cos()) / x.powi(3)).abs() < 1e-15);
    }
    assert!(sphere_form_factor(4.4934).abs() < 1e-4);
    assert!(sphere_form_factor(4.4) > 0.0 && sphere_form_factor(4.6) < 0.0);
}

#[test]
fn gaussian_smoothing_width_and_mass() {
    let shape = (32, 32, 32);
    let mut delta = Array3::zeros(shape);
    delta[[16, 16, 16]] = 1.0;
    let fwhm = 4.0;
    let g = gaussian_smooth(&delta, fwhm).unwrap();
    assert!((g.sum() - 1.0).abs() < 1e-12);
    let var: f64 = g.indexed_iter().map(|((i, _, _), v)| v * (i as f64 - 16.0).powi(2)).sum();
    let sigma = fwhm / (2.0 * (2.0 * 2f64.ln()).sqrt());
    assert!((var - sigma * sigma).abs() < 1e-3);
    assert!(gaussian_smooth(&delta, -1.0).is_err());
}

#[test]
fn convolving_a_point_gives_the_sphere() {
    let shape = (48, 48, 48);
    let mut delta = Array3::zeros(shape);
    delta[[24, 24, 24]] = 1.0;
    let conv = formfactor_convolve(&delta, 16.0).unwrap();
    let p = SpherePacking { centers: vec![[24.0; 3]], radius: 8.0, delta_value: 1.0, beta_value: 0.0 };
    let ball = render_packing(&p, shape).unwrap().delta();
    let ball = ball.mapv(|v| v / ball.sum());
    assert!((conv.sum() - 1.0).abs() < 1e-12);
    let centre = conv[[24, 24, 24]];
    assert!((centre - ball[[24, 24, 24]]).abs() < 0.1 * ball[[24, 24, 24]]);
}

#[test]
fn deconvolution_inverts_convolution_on_smooth_data() {
    let shape = (32, 32, 32);
    let v = blob(shape, [15.3, 16.0, 17.2], 2.0, 1.0);
    let conv = formfactor_convolve(&v, 6.0).unwrap();
    let back = formfactor_deconvolve(&conv, 6.0, 0.0, 1e-9).unwrap();
    let err = (&back - &v).mapv(|x| x * x).sum().sqrt() / v.mapv(|x| x * x).sum().sqrt();
    assert!(err < 1e-2, "relative error {err}");
    assert!(formfactor_deconvolve(&conv, 6.0, 0.0, 0.0).is_err());
    assert!(formfactor_deconvolve(&conv, -1.0, 0.0, 1e-3).is_err());
}

#[test]
fn peaks_are_found_with_subvoxel_accuracy() {
    let shape = (30, 30, 30);
    let centres = [[8.3, 9.6, 10.1], [20.0, 19.45, 8.8], [15.7, 22.2, 21.9]];
    let mut v = Array3::zeros(shape);
    for (k, c) in centres.iter().enumerate() {
        v = v + blob(shape, *c, 1.8, 1.0 + 0.2 * k as f64);
    }
    let peaks = locate_peaks(&v, 3.0, 0.3).unwrap();
    assert_eq!(peaks.len(), 3);
    for c in &centres {
        let d = peaks.positions.iter().map(|p| phasenewton::phantom::dist(p, c)).fold(f64::INFINITY, f64::min);
        assert!(d < 0.15, "{c:?}: {d}");
    }
    assert!(peaks.amplitudes.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn separation_and_threshold_thin_peaks() {
    let shape = (24, 24, 24);
    let v = blob(shape, [10.0, 10.0, 10.0], 1.2, 1.0) + blob(shape, [10.0, 10.0, 13.0], 1.2, 0.8)
        + blob(shape, [4.0, 18.0, 18.0], 1.2, 0.1);
    assert_eq!(locate_peaks(&v, 1.0, 0.05).unwrap().len(), 3);
    assert_eq!(locate_peaks(&v, 4.0, 0.05).unwrap().len(), 2);
    assert_eq!(locate_peaks(&v, 1.0, 0.5).unwrap().len(), 2);
    assert!(locate_peaks(&Array3::zeros(shape), 2.0, 0.1).unwrap().is_empty());
    assert!(locate_peaks(&v, 0.5, 0.1).is_err());
}

#[test]
fn csv_lists_voxel_and_physical_coordinates() {
    let p = PeakSet { positions: vec![[1.0, 2.5, 3.0]], amplitudes: vec![0.75] };
    let mut buf = Vec::new();
    p.write_csv(&mut buf, 20.0).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text, "x_vox,y_vox,z_vox,x_nm,y_nm,z_nm,amplitude\n1,2.5,3,20,50,60,0.75\n");
}

/// First interior local minimum lying at least 0.2 below every earlier shell.
pub fn first_dip(c: &FscCurve) -> Option<usize> {
    let r = &c.correlation;
    (1..r.len() - 1).find(|&k| {
        let before = r[..k].iter().cloned().fold(f64::INFINITY, f64::min);
        r[k] < r[k - 1] && r[k] <= r[k + 1] && r[k] < before - 0.2
    })
}

#[test]
fn sphere_fsc_dips_at_form_factor_zero() {
    let shape = (64, 64, 64);
    let radius = 5.0;
    let centers = random_packing(30, radius, 2.0, shape, 21, 100_000);
    let p = SpherePacking { centers, radius, delta_value: 1.0, beta_value: 0.0 };
    let v = render_packing(&p, shape).unwrap().delta();
    let noise = |seed| NoiseModel { kind: NoiseKind::Gaussian { sigma: 0.3 }, seed };
    let (a, _) = add_noise(&v, &noise(1)).unwrap();
    let (b, _) = add_noise(&v, &noise(2)).unwrap();
    let c = fsc(&a, &b, 32).unwrap();
    let zero = 4.4934 / (2.0 * PI * radius);
    let k = first_dip(&c).expect("a dip");
    assert!((c.shell_centers[k] - zero).abs() <= c.shell_width(), "dip at {} vs {zero}", c.shell_centers[k]);
}
