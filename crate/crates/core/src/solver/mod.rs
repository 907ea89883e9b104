//! Iteratively regularized Gauss-Newton method (IRGNM).
//!
//! Each Newton step minimizes the linearized, Tikhonov-regularized residual
//!
//! ```text
//! || F(x_k) + F'[x_k](x - x_k) - I_obs ||_Y^2 + alpha_k || x - x_0 ||_X^2
//! ```
//!
//! through conjugate gradients on the Gramian-weighted normal equations,
//! with `alpha_k` reduced geometrically from `alpha_0`.

mod cg;
mod constraints;
mod fidelity;
mod irgnm;
mod problem;

pub use cg::{conjugate_gradient, CgOutcome};
pub use constraints::{
    apply_subspace_constraint, positivity_penalty, ConstraintSpec, Parametrization, PositivityPenalty, Sign,
};
pub use fidelity::{fidelity_residual, weighted_norm, Fidelity};
pub use irgnm::{
    estimate_alpha0, gram_solve, irgnm, irgnm_from, newton_step_cg, plateau_index, NewtonStep, StepInput, StepParams,
};
pub use problem::{DenseLinearProblem, ForwardProblem, Linearization};

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Initial regularization parameter: estimated from the data or explicit.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "AlphaRepr", into = "AlphaRepr")]
pub enum AlphaChoice {
    #[default]
    Auto,
    Fixed(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum AlphaRepr {
    Value(f64),
    Keyword(String),
}

impl TryFrom<AlphaRepr> for AlphaChoice {
    type Error = String;
    fn try_from(r: AlphaRepr) -> std::result::Result<Self, String> {
        match r {
            AlphaRepr::Value(v) if v.is_finite() && v > 0.0 => Ok(AlphaChoice::Fixed(v)),
            AlphaRepr::Value(v) => Err(format!("alpha0 must be positive, got {v}")),
            AlphaRepr::Keyword(k) if k == "auto" => Ok(AlphaChoice::Auto),
            AlphaRepr::Keyword(k) => Err(format!("alpha0 must be a number or \"auto\", got \"{k}\"")),
        }
    }
}

impl From<AlphaChoice> for AlphaRepr {
    fn from(a: AlphaChoice) -> Self {
        match a {
            AlphaChoice::Auto => AlphaRepr::Keyword("auto".into()),
            AlphaChoice::Fixed(v) => AlphaRepr::Value(v),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopRule {
    /// Discrepancy principle when a noise level is known, else plateau.
    #[default]
    Auto,
    Discrepancy,
    Plateau,
    MaxIter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub alpha0: AlphaChoice,
    pub alpha_reduction: f64,
    /// Discrepancy factor, stop once `s_k <= tau ||noise||_Y`.
    pub tau: f64,
    pub max_newton: usize,
    pub cg_tol: f64,
    pub cg_max: usize,
    pub fidelity: Fidelity,
    /// Sign penalty weight; defaults to `alpha_0`.
    pub gamma: Option<f64>,
    pub stop_rule: StopRule,
    pub plateau_fraction: f64,
    /// Extra steps at frozen alpha after stopping, each multiplying gamma
    /// by `endgame_factor`. Only run when a sign penalty is active.
    pub endgame_steps: usize,
    pub endgame_factor: f64,
    /// Abort after this many consecutive residual increases.
    pub divergence_patience: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            alpha0: AlphaChoice::Auto,
            alpha_reduction: 2.0 / 3.0,
            tau: 1.5,
            max_newton: 30,
            cg_tol: 1e-3,
            cg_max: 50,
            fidelity: Fidelity::L2,
            gamma: None,
            stop_rule: StopRule::Auto,
            plateau_fraction: 0.01,
            endgame_steps: 3,
            endgame_factor: 10.0,
            divergence_patience: 3,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if let AlphaChoice::Fixed(a) = self.alpha0 {
            if !(a.is_finite() && a > 0.0) {
                return bad(format!("alpha0 must be positive, got {a}"));
            }
        }
        if !(self.alpha_reduction > 0.0 && self.alpha_reduction < 1.0) {
            return bad(format!("alpha_reduction must lie in (0, 1), got {}", self.alpha_reduction));
        }
        if !(self.tau >= 1.0) {
            return bad(format!("tau must be >= 1, got {}", self.tau));
        }
        if !(self.cg_tol > 0.0 && self.cg_tol < 1.0) {
            return bad(format!("cg_tol must lie in (0, 1), got {}", self.cg_tol));
        }
        if self.cg_max == 0 {
            return bad("cg_max must be >= 1".into());
        }
        if let Some(g) = self.gamma {
            if !(g.is_finite() && g >= 0.0) {
                return bad(format!("gamma must be >= 0, got {g}"));
            }
        }
        if !(self.plateau_fraction > 0.0 && self.plateau_fraction < 1.0) {
            return bad(format!("plateau_fraction must lie in (0, 1), got {}", self.plateau_fraction));
        }
        if !(self.endgame_factor >= 1.0) {
            return bad(format!("endgame_factor must be >= 1, got {}", self.endgame_factor));
        }
        self.fidelity.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Discrepancy,
    Plateau,
    MaxIterations,
    /// The residual vanished exactly.
    ExactFit,
    /// Fixed number of Kaczmarz sweeps completed.
    SweepsCompleted,
}

/// One line of the history log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub alpha: f64,
    pub gamma: f64,
    pub cg_iterations: usize,
    /// Residual after the step (IRGNM) or of the processed wedge before it (Kaczmarz).
    pub residual: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wedge: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct ReconResult {
    /// Final iterate in parameter coordinates.
    pub params: Array1<f64>,
    /// `s_0, ..., s_n`; one longer than the number of steps.
    pub residual_history: Vec<f64>,
    pub alpha_history: Vec<f64>,
    pub gamma_history: Vec<f64>,
    pub cg_counts: Vec<usize>,
    /// All steps taken, including the endgame.
    pub newton_count: usize,
    /// Trailing steps at frozen alpha with growing sign penalty.
    pub endgame_count: usize,
    pub stop_reason: StopReason,
    pub alpha0: f64,
    pub steps: Vec<StepRecord>,
}

impl ReconResult {
    pub fn total_cg(&self) -> usize {
        self.cg_counts.iter().sum()
    }
}
