use ndarray::Array1;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub solution: Array1<f64>,
    pub iterations: usize,
    /// `||b - A x|| / ||b||` at exit (recursively updated residual).
    pub relative_residual: f64,
    pub converged: bool,
}

/// Conjugate gradients for a symmetric positive definite operator, started
/// at zero. Stops at relative residual `tol` or after `max_iter` iterations.
pub fn conjugate_gradient<A>(apply: A, rhs: &Array1<f64>, tol: f64, max_iter: usize) -> Result<CgOutcome>
where
    A: Fn(&Array1<f64>) -> Array1<f64>,
{
    let n = rhs.len();
    let mut x = Array1::zeros(n);
    let b_norm = rhs.dot(rhs).sqrt();
    if b_norm == 0.0 {
        return Ok(CgOutcome { solution: x, iterations: 0, relative_residual: 0.0, converged: true });
    }
    let mut r = rhs.clone();
    let mut p = r.clone();
    let mut rr = r.dot(&r);
    let mut it = 0;
    while it < max_iter {
        if rr.sqrt() <= tol * b_norm {
            break;
        }
        let ap = apply(&p);
        let curvature = p.dot(&ap);
        if !(curvature > 0.0) {
            return Err(Error::CgBreakdown { iteration: it, curvature });
        }
        let step = rr / curvature;
        x.scaled_add(step, &p);
        r.scaled_add(-step, &ap);
        let rr_new = r.dot(&r);
        let beta = rr_new / rr;
        rr = rr_new;
        p = &r + &(beta * &p);
        it += 1;
    }
    let rel = rr.sqrt() / b_norm;
    Ok(CgOutcome { solution: x, iterations: it, relative_residual: rel, converged: rel <= tol })
}
