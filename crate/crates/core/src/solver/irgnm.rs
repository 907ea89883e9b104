use ndarray::Array1;

use super::cg::conjugate_gradient;
use super::constraints::positivity_penalty;
use super::fidelity::weighted_norm;
use super::problem::ForwardProblem;
use super::{AlphaChoice, ReconResult, SolverConfig, StepRecord, StopReason, StopRule};
use crate::error::{Error, Result};

/// `G_X^{-1} y`, by CG when the Gramian is not the identity.
pub fn gram_solve<P: ForwardProblem + ?Sized>(problem: &P, y: &Array1<f64>) -> Result<Array1<f64>> {
    if problem.gram_is_identity() {
        return Ok(y.clone());
    }
    let out = conjugate_gradient(|v| problem.gram(v), y, 1e-10, 4 * y.len().max(50))?;
    Ok(out.solution)
}

/// Default `alpha_0 = ||F' F'* I||_Y^2 / ||F'* I||_X^2`, with `F'` linearized at `x0`
/// and `F'*` its adjoint for the Gramian-weighted inner products.
pub fn estimate_alpha0<P: ForwardProblem + ?Sized>(
    problem: &P,
    x0: &Array1<f64>,
    data: &Array1<f64>,
    weights: &Array1<f64>,
) -> Result<f64> {
    let lin = problem.linearize(x0)?;
    let adj = gram_solve(problem, &lin.apply_transpose(&(weights * data)))?;
    let num = lin.apply(&adj);
    let num_sq = weighted_norm(&num, weights).powi(2);
    let den_sq = adj.dot(&problem.gram(&adj));
    if !(den_sq > 0.0 && num_sq > 0.0) {
        return Err(Error::DegenerateData(
            "cannot estimate alpha0: the adjoint derivative annihilates the data".into(),
        ));
    }
    let a = num_sq / den_sq;
    if !a.is_finite() {
        return Err(Error::NonFinite("alpha0 estimate"));
    }
    Ok(a)
}

/// Current state handed to a single Newton step.
#[derive(Debug, Clone, Copy)]
pub struct StepInput<'a> {
    pub x_k: &'a Array1<f64>,
    /// Prior `x_0` of the Tikhonov term.
    pub x_0: &'a Array1<f64>,
    /// `F(x_k)`, already evaluated by the caller.
    pub model_k: &'a Array1<f64>,
    pub data: &'a Array1<f64>,
    /// Diagonal of `G_Y`.
    pub weights: &'a Array1<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepParams {
    pub alpha: f64,
    /// Weight `beta` of the pull towards `x_0` in the right-hand side.
    pub prior_weight: f64,
    pub gamma: f64,
    pub cg_tol: f64,
    pub cg_max: usize,
}

#[derive(Debug, Clone)]
pub struct NewtonStep {
    pub next: Array1<f64>,
    pub update: Array1<f64>,
    pub cg_iterations: usize,
    /// Normal-equation residual relative to the right-hand side.
    pub cg_relative_residual: f64,
    pub cg_converged: bool,
    pub n_violating: usize,
}

/// One regularized Newton update: solves
///
/// ```text
/// (J^T G_Y J + alpha G_X + gamma M) d = J^T G_Y (I - F(x_k)) + alpha beta G_X (x_0 - x_k) - gamma M x_k
/// ```
///
/// by CG and returns `x_k + d`.
pub fn newton_step_cg<P: ForwardProblem + ?Sized>(
    problem: &P,
    input: StepInput<'_>,
    params: StepParams,
) -> Result<NewtonStep> {
    let n = problem.param_len();
    if input.x_k.len() != n || input.x_0.len() != n {
        return Err(Error::shape(&[n], &[input.x_k.len()]));
    }
    let m = input.data.len();
    if input.model_k.len() != m || input.weights.len() != m {
        return Err(Error::shape(&[m], &[input.model_k.len()]));
    }
    let lin = problem.linearize(input.x_k)?;
    let penalty = match problem.sign_orientation() {
        Some(o) if params.gamma > 0.0 => Some(positivity_penalty(input.x_k, o, params.gamma)),
        _ => None,
    };

    let weighted_res = input.weights * &(input.data - input.model_k);
    let mut rhs = lin.apply_transpose(&weighted_res);
    if params.prior_weight != 0.0 {
        let pull = problem.gram(&(input.x_0 - input.x_k));
        rhs.scaled_add(params.alpha * params.prior_weight, &pull);
    }
    if let Some(p) = &penalty {
        p.add_rhs(input.x_k, &mut rhs);
    }
    if rhs.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Newton right-hand side"));
    }

    let normal = |d: &Array1<f64>| {
        let jd = lin.apply(d);
        let mut out = lin.apply_transpose(&(input.weights * &jd));
        out.scaled_add(params.alpha, &problem.gram(d));
        if let Some(p) = &penalty {
            p.add_operator(d, &mut out);
        }
        out
    };
    let cg = conjugate_gradient(normal, &rhs, params.cg_tol, params.cg_max)?;
    let next = input.x_k + &cg.solution;
    Ok(NewtonStep {
        next,
        update: cg.solution,
        cg_iterations: cg.iterations,
        cg_relative_residual: cg.relative_residual,
        cg_converged: cg.converged,
        n_violating: penalty.map_or(0, |p| p.n_violating()),
    })
}

/// First index `k >= 1` where the decrease `s_{k-1} - s_k` is at most
/// `fraction` times the largest decrease seen up to `k`.
pub fn plateau_index(history: &[f64], fraction: f64) -> Option<usize> {
    let mut best = f64::NEG_INFINITY;
    for k in 1..history.len() {
        let dec = history[k - 1] - history[k];
        best = best.max(dec);
        if dec <= fraction * best.max(0.0) {
            return Some(k);
        }
    }
    None
}

/// IRGNM from the zero initial guess.
pub fn irgnm<P: ForwardProblem + ?Sized>(
    problem: &P,
    data: &Array1<f64>,
    noise_norm: Option<f64>,
    config: &SolverConfig,
) -> Result<ReconResult> {
    let x0 = Array1::zeros(problem.param_len());
    irgnm_from(problem, data, &x0, noise_norm, config)
}

/// IRGNM started at (and regularized towards) `x0`.
///
/// `noise_norm` is `||noise||_Y`, used by the discrepancy principle.
pub fn irgnm_from<P: ForwardProblem + ?Sized>(
    problem: &P,
    data: &Array1<f64>,
    x0: &Array1<f64>,
    noise_norm: Option<f64>,
    config: &SolverConfig,
) -> Result<ReconResult> {
    config.validate()?;
    if data.len() != problem.data_len() {
        return Err(Error::shape(&[problem.data_len()], &[data.len()]));
    }
    if x0.len() != problem.param_len() {
        return Err(Error::shape(&[problem.param_len()], &[x0.len()]));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("observed data"));
    }
    let (discrepancy, plateau) = match (config.stop_rule, noise_norm) {
        (StopRule::Auto, Some(_)) | (StopRule::Discrepancy, Some(_)) => (true, false),
        (StopRule::Auto, None) | (StopRule::Plateau, _) => (false, true),
        (StopRule::Discrepancy, None) => {
            return Err(Error::InvalidArgument("discrepancy stopping needs a noise level".into()))
        }
        (StopRule::MaxIter, _) => (false, false),
    };
    if let Some(e) = noise_norm {
        if !(e.is_finite() && e >= 0.0) {
            return Err(Error::InvalidArgument(format!("noise level must be >= 0, got {e}")));
        }
    }
    let threshold = config.tau * noise_norm.unwrap_or(0.0);

    let weights = config.fidelity.weights(data)?;
    let alpha0 = match config.alpha0 {
        AlphaChoice::Fixed(a) => a,
        AlphaChoice::Auto => estimate_alpha0(problem, x0, data, &weights)?,
    };
    let penalized = problem.sign_orientation().is_some();
    let mut gamma = if penalized { config.gamma.unwrap_or(alpha0) } else { 0.0 };

    let mut x = x0.clone();
    let mut model = problem.forward(&x)?;
    let mut s = weighted_norm(&(&model - data), &weights);
    let mut out = ReconResult {
        params: Array1::zeros(0),
        residual_history: vec![s],
        alpha_history: Vec::new(),
        gamma_history: Vec::new(),
        cg_counts: Vec::new(),
        newton_count: 0,
        endgame_count: 0,
        stop_reason: StopReason::MaxIterations,
        alpha0,
        steps: Vec::new(),
    };

    let mut stop = None;
    if s == 0.0 {
        stop = Some(StopReason::ExactFit);
    } else if discrepancy && s <= threshold {
        stop = Some(StopReason::Discrepancy);
    }

    let mut increases = 0;
    let mut alpha = alpha0;
    let mut k = 0;
    while stop.is_none() && k < config.max_newton {
        alpha = alpha0 * config.alpha_reduction.powi(k as i32);
        let input = StepInput { x_k: &x, x_0: x0, model_k: &model, data, weights: &weights };
        let params = StepParams { alpha, prior_weight: 1.0, gamma, cg_tol: config.cg_tol, cg_max: config.cg_max };
        let step = newton_step_cg(problem, input, params)?;
        x = step.next;
        model = problem.forward(&x)?;
        let s_new = weighted_norm(&(&model - data), &weights);
        if !s_new.is_finite() {
            return Err(Error::NonFinite("residual"));
        }
        k += 1;
        out.record(k, alpha, gamma, step.cg_iterations, s_new);

        if s_new > s {
            increases += 1;
            if increases >= config.divergence_patience.max(1) {
                return Err(Error::Divergence(format!(
                    "residual increased {increases} times in a row, reaching {s_new:.6e} at step {k}"
                )));
            }
        } else {
            increases = 0;
        }
        s = s_new;

        if s == 0.0 {
            stop = Some(StopReason::ExactFit);
        } else if discrepancy && s <= threshold {
            stop = Some(StopReason::Discrepancy);
        } else if plateau && plateau_index(&out.residual_history, config.plateau_fraction) == Some(k) {
            stop = Some(StopReason::Plateau);
        }
    }
    out.stop_reason = stop.unwrap_or(StopReason::MaxIterations);
    out.newton_count = k;

    if penalized && gamma > 0.0 && k > 0 {
        for _ in 0..config.endgame_steps {
            gamma *= config.endgame_factor;
            let input = StepInput { x_k: &x, x_0: x0, model_k: &model, data, weights: &weights };
            let params = StepParams { alpha, prior_weight: 1.0, gamma, cg_tol: config.cg_tol, cg_max: config.cg_max };
            let step = newton_step_cg(problem, input, params)?;
            x = step.next;
            model = problem.forward(&x)?;
            s = weighted_norm(&(&model - data), &weights);
            if !s.is_finite() {
                return Err(Error::NonFinite("residual"));
            }
            k += 1;
            out.record(k, alpha, gamma, step.cg_iterations, s);
            out.endgame_count += 1;
        }
        out.newton_count = k;
    }

    out.params = x;
    Ok(out)
}

impl ReconResult {
    fn record(&mut self, step: usize, alpha: f64, gamma: f64, cg: usize, residual: f64) {
        self.residual_history.push(residual);
        self.alpha_history.push(alpha);
        self.gamma_history.push(gamma);
        self.cg_counts.push(cg);
        self.steps.push(StepRecord { step, alpha, gamma, cg_iterations: cg, residual, wedge: None });
    }
}
