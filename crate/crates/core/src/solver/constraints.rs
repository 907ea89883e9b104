//! Subspace constraints (support, real-valuedness, fixed absorption/phase
//! ratio) and the sign penalty.
//!
//! Subspace constraints are realized by a linear embedding `E` from real
//! parameters into the complex object. Solving the Newton step in parameter
//! coordinates is the same as replacing `F'*` by `P F'*` with the orthogonal
//! projector `P = E (E^T E)^-1 E^T`.

use ndarray::{Array, Array1, ArrayD, Dimension};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Nonnegative,
    Nonpositive,
}

impl Sign {
    fn as_i8(self) -> i8 {
        match self {
            Sign::Nonnegative => 1,
            Sign::Nonpositive => -1,
        }
    }
}

/// Constraint set `C`. The sign requirement applies to both the phase
/// (`Re f`) and the absorption (`mu = -2 Im f`) component.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConstraintSpec {
    pub support_mask: Option<ArrayD<bool>>,
    /// Fixed `mu/phi` ratio `c`: `f = (1 - i c/2) phi` with real `phi`.
    pub homogeneous_ratio: Option<f64>,
    /// `f` real, i.e. `mu = 0`.
    pub real_valued: bool,
    pub sign: Option<Sign>,
    /// Sign penalty weight; `None` means "use alpha_0".
    pub penalty_weight: Option<f64>,
}

impl ConstraintSpec {
    pub fn validate(&self, shape: &[usize]) -> Result<()> {
        if let Some(mask) = &self.support_mask {
            if mask.shape() != shape {
                return Err(Error::shape(shape, mask.shape()));
            }
        }
        if let Some(c) = self.homogeneous_ratio {
            if !(c.is_finite() && c >= 0.0) {
                return Err(Error::InvalidArgument(format!("homogeneous ratio must be >= 0, got {c}")));
            }
            if self.real_valued {
                return Err(Error::InvalidArgument(
                    "homogeneous_ratio and real_valued are mutually exclusive".into(),
                ));
            }
        }
        if let Some(g) = self.penalty_weight {
            if !(g.is_finite() && g >= 0.0) {
                return Err(Error::InvalidArgument(format!("penalty weight must be >= 0, got {g}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    Complex,
    /// `f = v * p` for a fixed complex direction `v`.
    Line(Complex64),
}

/// Embedding of real parameters into a complex field, honoring the
/// subspace constraints of a [`ConstraintSpec`].
///
/// Parameter layout: for unconstrained complex fields `[Re f; Im f]` over
/// the active pixels, otherwise one real value per active pixel.
#[derive(Debug, Clone)]
pub struct Parametrization {
    shape: Vec<usize>,
    total: usize,
    active: Option<Vec<usize>>,
    kind: Kind,
    orientation: Option<Vec<i8>>,
}

impl Parametrization {
    pub fn new(shape: &[usize], constraints: &ConstraintSpec) -> Result<Self> {
        constraints.validate(shape)?;
        let total = shape.iter().product();
        let active = constraints
            .support_mask
            .as_ref()
            .map(|m| m.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| i).collect::<Vec<_>>());
        let kind = if let Some(c) = constraints.homogeneous_ratio {
            Kind::Line(Complex64::new(1.0, -c / 2.0))
        } else if constraints.real_valued {
            Kind::Line(Complex64::new(1.0, 0.0))
        } else {
            Kind::Complex
        };
        let n_active = active.as_ref().map_or(total, Vec::len);
        let orientation = constraints.sign.map(|s| {
            let o = s.as_i8();
            match kind {
                // Im f = -mu/2 carries the opposite sign of mu.
                Kind::Complex => (0..2 * n_active).map(|k| if k < n_active { o } else { -o }).collect(),
                Kind::Line(_) => vec![o; n_active],
            }
        });
        Ok(Self { shape: shape.to_vec(), total, active, kind, orientation })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn n_active(&self) -> usize {
        self.active.as_ref().map_or(self.total, Vec::len)
    }

    pub fn len(&self) -> usize {
        match self.kind {
            Kind::Complex => 2 * self.n_active(),
            Kind::Line(_) => self.n_active(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// True when the embedded field is always real.
    pub fn is_real(&self) -> bool {
        matches!(self.kind, Kind::Line(v) if v.im == 0.0)
    }

    /// True when `E^T E = I`, so parameter and field norms agree.
    pub fn is_isometric(&self) -> bool {
        match self.kind {
            Kind::Complex => true,
            Kind::Line(v) => v.norm_sqr() == 1.0,
        }
    }

    pub fn orientation(&self) -> Option<&[i8]> {
        self.orientation.as_deref()
    }

    #[inline]
    fn pixel(&self, k: usize) -> usize {
        match &self.active {
            Some(a) => a[k],
            None => k,
        }
    }

    /// `E p` as a flat row-major field; zero outside the support.
    pub fn embed(&self, p: &Array1<f64>) -> Vec<Complex64> {
        assert_eq!(p.len(), self.len(), "parameter length mismatch");
        let mut out = vec![Complex64::new(0.0, 0.0); self.total];
        let n = self.n_active();
        match self.kind {
            Kind::Complex => {
                for k in 0..n {
                    out[self.pixel(k)] = Complex64::new(p[k], p[n + k]);
                }
            }
            Kind::Line(v) => {
                for k in 0..n {
                    out[self.pixel(k)] = v * p[k];
                }
            }
        }
        out
    }

    /// `E^T g` for a flat field `g`, with respect to `Re <a, b>`.
    pub fn embed_transpose(&self, g: &[Complex64]) -> Array1<f64> {
        assert_eq!(g.len(), self.total, "field length mismatch");
        let n = self.n_active();
        match self.kind {
            Kind::Complex => {
                let mut out = Array1::zeros(2 * n);
                for k in 0..n {
                    let z = g[self.pixel(k)];
                    out[k] = z.re;
                    out[n + k] = z.im;
                }
                out
            }
            Kind::Line(v) => Array1::from_shape_fn(n, |k| (v.conj() * g[self.pixel(k)]).re),
        }
    }

    /// Transpose restricted to real fields `g` (imaginary part zero).
    pub fn embed_transpose_real(&self, g: &[f64]) -> Array1<f64> {
        assert_eq!(g.len(), self.total, "field length mismatch");
        let n = self.n_active();
        match self.kind {
            Kind::Complex => {
                let mut out = Array1::zeros(2 * n);
                for k in 0..n {
                    out[k] = g[self.pixel(k)];
                }
                out
            }
            Kind::Line(v) => Array1::from_shape_fn(n, |k| v.re * g[self.pixel(k)]),
        }
    }

    /// Parameters of the orthogonal projection of `f` onto the subspace,
    /// `(E^T E)^-1 E^T f`.
    pub fn project_params(&self, f: &[Complex64]) -> Array1<f64> {
        let mut p = self.embed_transpose(f);
        if let Kind::Line(v) = self.kind {
            p /= v.norm_sqr();
        }
        p
    }
}

/// Orthogonal projection of `h` onto the constraint subspace.
pub fn apply_subspace_constraint<D: Dimension>(
    h: &Array<Complex64, D>,
    constraints: &ConstraintSpec,
) -> Result<Array<Complex64, D>> {
    let param = Parametrization::new(h.shape(), constraints)?;
    let flat: Vec<Complex64> = h.iter().copied().collect();
    let projected = param.embed(&param.project_params(&flat));
    Ok(Array::from_shape_vec(h.raw_dim(), projected).expect("same element count"))
}

/// Linearized sign penalty `gamma || min(0, x_k) - min(0, sign x_k) (x - x_k) ||^2`
/// around the current iterate, for the orientation-adjusted parameters.
///
/// On pixels violating the sign it equals `gamma (x_k + d)^2` in the update
/// `d`; elsewhere it vanishes. It contributes `gamma M d` to the normal
/// operator and `-gamma M x_k` to the right-hand side.
#[derive(Debug, Clone)]
pub struct PositivityPenalty {
    pub gamma: f64,
    violating: Vec<usize>,
    /// Penalty value at `d = 0`.
    pub value: f64,
}

pub fn positivity_penalty(x_k: &Array1<f64>, orientation: &[i8], gamma: f64) -> PositivityPenalty {
    assert_eq!(x_k.len(), orientation.len(), "orientation length mismatch");
    let violating: Vec<usize> = (0..x_k.len())
        .filter(|&i| orientation[i] != 0 && (orientation[i] as f64) * x_k[i] < 0.0)
        .collect();
    let value = gamma * violating.iter().map(|&i| x_k[i] * x_k[i]).sum::<f64>();
    PositivityPenalty { gamma, violating, value }
}

impl PositivityPenalty {
    pub fn n_violating(&self) -> usize {
        self.violating.len()
    }

    pub fn is_inactive(&self) -> bool {
        self.gamma == 0.0 || self.violating.is_empty()
    }

    /// Adds `gamma M d` to `out`.
    pub fn add_operator(&self, d: &Array1<f64>, out: &mut Array1<f64>) {
        if self.gamma == 0.0 {
            return;
        }
        for &i in &self.violating {
            out[i] += self.gamma * d[i];
        }
    }

    /// Adds `-gamma M x_k` to `rhs`.
    pub fn add_rhs(&self, x_k: &Array1<f64>, rhs: &mut Array1<f64>) {
        if self.gamma == 0.0 {
            return;
        }
        for &i in &self.violating {
            rhs[i] -= self.gamma * x_k[i];
        }
    }
}
