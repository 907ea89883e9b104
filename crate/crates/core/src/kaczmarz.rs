//! Regularized Newton-Kaczmarz iteration over blocks of frames.
//!
//! Step `k` linearizes only the frames of wedge `j_k` and minimizes
//!
//! ```text
//! ||F_j(x_k) + F_j'[x_k](x - x_k) - I_j||^2 + alpha (beta ||x - x_0||^2 + (1 - beta) ||x - x_k||^2)
//! ```

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{TomoProblem, TomoSubproblem};
use crate::solver::{
    estimate_alpha0, newton_step_cg, weighted_norm, AlphaChoice, ForwardProblem, NewtonStep, ReconResult,
    StepInput, StepParams, StepRecord, StopReason,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum WedgeOrder {
    #[default]
    Sequential,
    /// Wedge order shuffled independently in every pass.
    Random { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WedgeSchedule {
    pub wedge_size: usize,
    pub passes: usize,
    pub order: WedgeOrder,
    /// Frame indices processed in each step.
    pub wedges: Vec<Vec<usize>>,
}

impl WedgeSchedule {
    pub fn len(&self) -> usize {
        self.wedges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wedges.is_empty()
    }

    pub fn wedges_per_pass(&self) -> usize {
        self.wedges.len() / self.passes.max(1)
    }
}

/// Splits `0..n_frames` into contiguous wedges and repeats them `passes` times.
pub fn build_schedule(n_frames: usize, wedge_size: usize, passes: usize, order: WedgeOrder) -> Result<WedgeSchedule> {
    if wedge_size == 0 || passes == 0 {
        return Err(Error::InvalidArgument("wedge size and passes must be >= 1".into()));
    }
    if wedge_size > n_frames {
        return Err(Error::InvalidArgument(format!(
            "wedge size {wedge_size} exceeds the number of frames {n_frames}"
        )));
    }
    let base: Vec<Vec<usize>> =
        (0..n_frames).collect::<Vec<_>>().chunks(wedge_size).map(<[usize]>::to_vec).collect();
    let mut rng = match order {
        WedgeOrder::Random { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        WedgeOrder::Sequential => None,
    };
    let mut wedges = Vec::with_capacity(base.len() * passes);
    for _ in 0..passes {
        let mut idx: Vec<usize> = (0..base.len()).collect();
        if let Some(rng) = rng.as_mut() {
            idx.shuffle(rng);
        }
        wedges.extend(idx.into_iter().map(|i| base[i].clone()));
    }
    Ok(WedgeSchedule { wedge_size, passes, order, wedges })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KaczmarzConfig {
    /// Estimated once from the first wedge when automatic, then frozen.
    pub alpha0: AlphaChoice,
    pub beta: f64,
    /// Sign penalty weight; defaults to `alpha_0`.
    pub gamma: Option<f64>,
    pub cg_tol: f64,
    pub cg_max: usize,
    /// Optional per-step `alpha_k`; the last entry repeats.
    pub alpha_schedule: Option<Vec<f64>>,
    /// Optional per-step `beta_k`; the last entry repeats.
    pub beta_schedule: Option<Vec<f64>>,
}

impl Default for KaczmarzConfig {
    fn default() -> Self {
        Self {
            alpha0: AlphaChoice::Auto,
            beta: 0.001,
            gamma: None,
            cg_tol: 1e-3,
            cg_max: 50,
            alpha_schedule: None,
            beta_schedule: None,
        }
    }
}

impl KaczmarzConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(0.0..=1.0).contains(&self.beta) {
            return bad(format!("beta must lie in [0, 1], got {}", self.beta));
        }
        if let AlphaChoice::Fixed(a) = self.alpha0 {
            if !(a.is_finite() && a > 0.0) {
                return bad(format!("alpha0 must be positive, got {a}"));
            }
        }
        if let Some(g) = self.gamma {
            if !(g.is_finite() && g >= 0.0) {
                return bad(format!("gamma must be >= 0, got {g}"));
            }
        }
        if !(self.cg_tol > 0.0 && self.cg_tol < 1.0) || self.cg_max == 0 {
            return bad("cg_tol must lie in (0, 1) and cg_max be >= 1".into());
        }
        if let Some(s) = &self.alpha_schedule {
            if s.is_empty() || s.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
                return bad("alpha_schedule must be nonempty and positive".into());
            }
        }
        if let Some(s) = &self.beta_schedule {
            if s.is_empty() || s.iter().any(|b| !(0.0..=1.0).contains(b)) {
                return bad("beta_schedule entries must lie in [0, 1]".into());
            }
        }
        Ok(())
    }

    fn alpha_at(&self, k: usize, alpha0: f64) -> f64 {
        self.alpha_schedule.as_ref().map_or(alpha0, |s| s[k.min(s.len() - 1)])
    }

    fn beta_at(&self, k: usize) -> f64 {
        self.beta_schedule.as_ref().map_or(self.beta, |s| s[k.min(s.len() - 1)])
    }
}

/// A problem whose data splits into frames that can be linearized separately.
pub trait FrameSplit: Sync {
    type Sub<'a>: ForwardProblem
    where
        Self: 'a;

    fn n_frames(&self) -> usize;
    fn frame_len(&self) -> usize;
    fn param_len(&self) -> usize;
    /// The problem restricted to `frames`, with data concatenated in that order.
    fn subproblem(&self, frames: &[usize]) -> Result<Self::Sub<'_>>;
}

impl FrameSplit for TomoProblem {
    type Sub<'a> = TomoSubproblem<'a>;

    fn n_frames(&self) -> usize {
        self.operator().n_frames()
    }

    fn frame_len(&self) -> usize {
        let (r, c) = self.operator().frame_shape();
        r * c
    }

    fn param_len(&self) -> usize {
        self.parametrization().len()
    }

    fn subproblem(&self, frames: &[usize]) -> Result<TomoSubproblem<'_>> {
        TomoProblem::subproblem(self, frames)
    }
}

/// Per-step parameters of a Kaczmarz update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KaczmarzStepParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub cg_tol: f64,
    pub cg_max: usize,
}

/// One regularized Newton step on a single block. Returns the step and
/// the block residual before it.
pub fn kaczmarz_step<P: ForwardProblem + ?Sized>(
    sub: &P,
    x_k: &Array1<f64>,
    x_0: &Array1<f64>,
    data: &Array1<f64>,
    params: KaczmarzStepParams,
) -> Result<(NewtonStep, f64)> {
    if !(0.0..=1.0).contains(&params.beta) {
        return Err(Error::InvalidArgument(format!("beta must lie in [0, 1], got {}", params.beta)));
    }
    let model = sub.forward(x_k)?;
    let weights = Array1::ones(data.len());
    let before = weighted_norm(&(&model - data), &weights);
    let input = StepInput { x_k, x_0, model_k: &model, data, weights: &weights };
    let step = newton_step_cg(
        sub,
        input,
        StepParams {
            alpha: params.alpha,
            prior_weight: params.beta,
            gamma: params.gamma,
            cg_tol: params.cg_tol,
            cg_max: params.cg_max,
        },
    )?;
    Ok((step, before))
}

#[derive(Debug, Clone)]
pub struct KaczmarzResult {
    /// `residual_history[k]` is the residual of wedge `k` after step `k`;
    /// entry 0 is the global initial residual.
    pub recon: ReconResult,
    pub initial_residual: f64,
    pub final_residual: f64,
    /// Wedge residuals before each step.
    pub wedge_residuals: Vec<f64>,
    /// Root sum of squares of the pre-step wedge residuals in each pass.
    pub pass_residuals: Vec<f64>,
}

fn block_data(data: &Array2<f64>, frames: &[usize]) -> Array1<f64> {
    let mut out = Vec::with_capacity(frames.len() * data.ncols());
    for &j in frames {
        out.extend(data.index_axis(Axis(0), j).iter());
    }
    Array1::from(out)
}

/// Global residual, evaluated one wedge at a time.
pub fn global_residual<S: FrameSplit + ?Sized>(
    split: &S,
    data: &Array2<f64>,
    x: &Array1<f64>,
    chunk: usize,
) -> Result<f64> {
    let all: Vec<usize> = (0..split.n_frames()).collect();
    let mut sq = 0.0;
    for frames in all.chunks(chunk.max(1)) {
        let sub = split.subproblem(frames)?;
        let r = sub.forward(x)? - block_data(data, frames);
        sq += r.dot(&r);
    }
    Ok(sq.sqrt())
}

/// Sweeps Kaczmarz steps over `schedule`, starting at and regularizing towards `x0`.
///
/// `data` holds one flattened frame per row.
pub fn kaczmarz_reconstruct<S: FrameSplit + ?Sized>(
    split: &S,
    data: &Array2<f64>,
    x0: &Array1<f64>,
    schedule: &WedgeSchedule,
    config: &KaczmarzConfig,
) -> Result<KaczmarzResult> {
    config.validate()?;
    if data.dim() != (split.n_frames(), split.frame_len()) {
        return Err(Error::shape(&[split.n_frames(), split.frame_len()], data.shape()));
    }
    if x0.len() != split.param_len() {
        return Err(Error::shape(&[split.param_len()], &[x0.len()]));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("observed data"));
    }
    let mut counts = vec![0usize; split.n_frames()];
    for w in &schedule.wedges {
        for &j in w {
            if j >= split.n_frames() {
                return Err(Error::InvalidArgument(format!("schedule references frame {j}")));
            }
            counts[j] += 1;
        }
    }
    if counts.iter().any(|&c| c == 0) {
        return Err(Error::InvalidArgument("schedule does not cover every frame".into()));
    }

    let chunk = schedule.wedge_size.max(1);
    let initial = global_residual(split, data, x0, chunk)?;
    let alpha0 = match config.alpha0 {
        AlphaChoice::Fixed(a) => a,
        AlphaChoice::Auto => {
            let first = &schedule.wedges[0];
            let sub = split.subproblem(first)?;
            let d = block_data(data, first);
            estimate_alpha0(&sub, x0, &d, &Array1::ones(d.len()))?
        }
    };

    let mut x = x0.clone();
    let mut recon = ReconResult {
        params: Array1::zeros(0),
        residual_history: vec![initial],
        alpha_history: Vec::new(),
        gamma_history: Vec::new(),
        cg_counts: Vec::new(),
        newton_count: 0,
        endgame_count: 0,
        stop_reason: StopReason::SweepsCompleted,
        alpha0,
        steps: Vec::new(),
    };
    let mut wedge_residuals = Vec::with_capacity(schedule.len());
    let per_pass = schedule.wedges_per_pass().max(1);
    let mut pass_residuals = Vec::new();
    let mut pass_sq = 0.0;

    for (k, frames) in schedule.wedges.iter().enumerate() {
        let sub = split.subproblem(frames)?;
        let penalized = sub.sign_orientation().is_some();
        let gamma = if penalized { config.gamma.unwrap_or(alpha0) } else { 0.0 };
        let alpha = config.alpha_at(k, alpha0);
        let params = KaczmarzStepParams {
            alpha,
            beta: config.beta_at(k),
            gamma,
            cg_tol: config.cg_tol,
            cg_max: config.cg_max,
        };
        let d = block_data(data, frames);
        let (step, before) = kaczmarz_step(&sub, &x, x0, &d, params)?;
        x = step.next;
        let r = sub.forward(&x)? - &d;
        let after = r.dot(&r).sqrt();
        if !after.is_finite() {
            return Err(Error::NonFinite("residual"));
        }
        wedge_residuals.push(before);
        pass_sq += before * before;
        if (k + 1) % per_pass == 0 {
            pass_residuals.push(pass_sq.sqrt());
            pass_sq = 0.0;
        }
        recon.residual_history.push(after);
        recon.alpha_history.push(alpha);
        recon.gamma_history.push(gamma);
        recon.cg_counts.push(step.cg_iterations);
        recon.steps.push(StepRecord {
            step: k + 1,
            alpha,
            gamma,
            cg_iterations: step.cg_iterations,
            residual: after,
            wedge: Some(k),
        });
    }
    recon.newton_count = schedule.len();
    let final_residual = global_residual(split, data, &x, chunk)?;
    recon.params = x;
    Ok(KaczmarzResult { recon, initial_residual: initial, final_residual, wedge_residuals, pass_residuals })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequential_schedule_of_twelve_frames() {
        let s = build_schedule(12, 6, 1, WedgeOrder::Sequential).unwrap();
        assert_eq!(s.wedges, vec![(0..6).collect::<Vec<_>>(), (6..12).collect()]);
    }

    #[test]
    fn rejects_oversized_wedge() {
        assert!(build_schedule(4, 6, 1, WedgeOrder::Sequential).is_err());
        assert!(build_schedule(4, 2, 0, WedgeOrder::Sequential).is_err());
    }

    #[test]
    fn random_order_keeps_membership() {
        let s = build_schedule(20, 3, 2, WedgeOrder::Random { seed: 5 }).unwrap();
        for w in &s.wedges {
            assert!(w.windows(2).all(|p| p[1] == p[0] + 1));
        }
        assert_eq!(s, build_schedule(20, 3, 2, WedgeOrder::Random { seed: 5 }).unwrap());
    }
}
