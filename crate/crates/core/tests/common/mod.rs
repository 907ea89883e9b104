#![allow(dead_code)]

use ndarray::{Array1, Array2, Array3};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn cfield(shape: (usize, usize), scale: f64, r: &mut ChaCha8Rng) -> Array2<Complex64> {
    Array2::from_shape_fn(shape, |_| Complex64::new(r.random::<f64>() - 0.5, r.random::<f64>() - 0.5) * scale)
}

pub fn rfield(shape: (usize, usize), r: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn(shape, |_| r.random::<f64>() - 0.5)
}

pub fn cvol(shape: (usize, usize, usize), scale: f64, r: &mut ChaCha8Rng) -> Array3<Complex64> {
    Array3::from_shape_fn(shape, |_| Complex64::new(r.random::<f64>() - 0.5, r.random::<f64>() - 0.5) * scale)
}

pub fn rvec(n: usize, r: &mut ChaCha8Rng) -> Array1<f64> {
    Array1::from_shape_fn(n, |_| r.random::<f64>() - 0.5)
}

/// `Re sum conj(a) b`.
pub fn rdot2(a: &Array2<Complex64>, b: &Array2<Complex64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x.conj() * y).re).sum()
}

pub fn rdot3(a: &Array3<Complex64>, b: &Array3<Complex64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x.conj() * y).re).sum()
}

pub fn norm2c(a: &Array2<Complex64>) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Dense matrix with i.i.d. uniform entries in [-1, 1).
pub fn dense(rows: usize, cols: usize, r: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| 2.0 * r.random::<f64>() - 1.0)
}

/// Solves `m x = b` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(m: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let n = b.len();
    let mut a = m.clone();
    let mut x = b.clone();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[[i, k]].abs().total_cmp(&a[[j, k]].abs())).unwrap();
        for j in 0..n {
            a.swap([k, j], [p, j]);
        }
        x.swap(k, p);
        for i in k + 1..n {
            let f = a[[i, k]] / a[[k, k]];
            for j in k..n {
                a[[i, j]] -= f * a[[k, j]];
            }
            x[i] -= f * x[k];
        }
    }
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| a[[k, j]] * x[j]).sum();
        x[k] = (x[k] - s) / a[[k, k]];
    }
    x
}
