use ndarray::{Array1, Array2, Zip};
use num_complex::Complex64;

use super::Object2D;
use crate::error::{Error, Result};
use crate::gridmath::{
    gram_apply, gram_apply_complex, gram_apply_inverse_complex, Direction, FresnelPropagator, GramianSpec,
    ImagingGeometry, Padding,
};
use crate::solver::{ConstraintSpec, ForwardProblem, Linearization, Parametrization};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// `f -> |D(exp(-i f))|^2` on a fixed grid.
#[derive(Debug, Clone)]
pub struct PhaseContrastOperator {
    prop: FresnelPropagator,
}

impl PhaseContrastOperator {
    pub fn new(shape: (usize, usize), geom: ImagingGeometry, padding: Padding) -> Result<Self> {
        Ok(Self { prop: FresnelPropagator::new(shape, geom, padding)? })
    }

    pub fn shape(&self) -> (usize, usize) {
        self.prop.shape()
    }

    pub fn propagator(&self) -> &FresnelPropagator {
        &self.prop
    }

    fn check(&self, f: &Array2<Complex64>) -> Result<()> {
        if f.dim() != self.shape() {
            return Err(Error::shape(&[self.shape().0, self.shape().1], f.shape()));
        }
        if f.iter().any(|z| !z.is_finite()) {
            return Err(Error::NonFinite("object"));
        }
        Ok(())
    }

    /// Exit wave `exp(-i f)` and detector field `D(exp(-i f))`.
    fn fields(&self, f: &Array2<Complex64>) -> (Array2<Complex64>, Array2<Complex64>) {
        let e = f.mapv(|z| (-I * z).exp());
        let u = self.prop.propagate(&e, Direction::Forward);
        (e, u)
    }

    pub fn forward(&self, f: &Array2<Complex64>) -> Result<Array2<f64>> {
        self.check(f)?;
        let (_, u) = self.fields(f);
        Ok(u.mapv(|z| z.norm_sqr()))
    }

    pub fn linearize(&self, f: &Array2<Complex64>) -> Result<PcLinearization<'_>> {
        self.check(f)?;
        let (e, u) = self.fields(f);
        Ok(PcLinearization { prop: &self.prop, e, u })
    }
}

/// Derivative of the phase-contrast operator at a fixed object.
#[derive(Debug, Clone)]
pub struct PcLinearization<'a> {
    prop: &'a FresnelPropagator,
    e: Array2<Complex64>,
    u: Array2<Complex64>,
}

impl PcLinearization<'_> {
    /// Intensity at the linearization point.
    pub fn intensity(&self) -> Array2<f64> {
        self.u.mapv(|z| z.norm_sqr())
    }

    /// `2 Im(conj(u) D(e h))`.
    pub fn apply(&self, h: &Array2<Complex64>) -> Array2<f64> {
        assert_eq!(h.dim(), self.e.dim(), "perturbation shape mismatch");
        let eh = &self.e * h;
        let d = self.prop.propagate(&eh, Direction::Forward);
        let mut out = Array2::zeros(d.dim());
        Zip::from(&mut out).and(&self.u).and(&d).for_each(|o, u, d| *o = 2.0 * (u.conj() * d).im);
        out
    }

    /// Transpose for `Re <a, b>`: `conj(e) D^T(2i g u)`.
    pub fn apply_transpose(&self, g: &Array2<f64>) -> Array2<Complex64> {
        assert_eq!(g.dim(), self.u.dim(), "data shape mismatch");
        let mut w = Array2::zeros(g.dim());
        Zip::from(&mut w).and(g).and(&self.u).for_each(|w, g, u| *w = 2.0 * I * *g * u);
        let mut back = self.prop.adjoint(&w, Direction::Forward);
        back.zip_mut_with(&self.e, |b, e| *b *= e.conj());
        back
    }
}

fn operator_for(shape: (usize, usize), geom: &ImagingGeometry) -> Result<PhaseContrastOperator> {
    PhaseContrastOperator::new(shape, *geom, Padding::None)
}

/// Detector intensity of `obj` without padding.
pub fn pc_forward(obj: &Object2D, geom: &ImagingGeometry) -> Result<Array2<f64>> {
    operator_for(obj.shape(), geom)?.forward(&obj.f)
}

pub fn pc_derivative(obj: &Object2D, h: &Array2<Complex64>, geom: &ImagingGeometry) -> Result<Array2<f64>> {
    if h.dim() != obj.shape() {
        return Err(Error::shape(obj.f.shape(), h.shape()));
    }
    let op = operator_for(obj.shape(), geom)?;
    Ok(op.linearize(&obj.f)?.apply(h))
}

/// Adjoint of the derivative between the Gramian-weighted spaces,
/// `G_X^-1 J^T G_Y g`.
pub fn pc_adjoint(
    obj: &Object2D,
    g: &Array2<f64>,
    geom: &ImagingGeometry,
    gram_x: &GramianSpec,
    gram_y: &GramianSpec,
) -> Result<Array2<Complex64>> {
    if g.dim() != obj.shape() {
        return Err(Error::shape(obj.f.shape(), g.shape()));
    }
    gram_y.validate(g.dim())?;
    let op = operator_for(obj.shape(), geom)?;
    let t = op.linearize(&obj.f)?.apply_transpose(&gram_apply(g, gram_y)?);
    gram_apply_inverse_complex(&t, gram_x)
}

/// Phase-contrast imaging as a [`ForwardProblem`] over constrained parameters.
#[derive(Debug, Clone)]
pub struct PhaseContrastProblem {
    op: PhaseContrastOperator,
    param: Parametrization,
    gram_x: GramianSpec,
}

impl PhaseContrastProblem {
    pub fn new(op: PhaseContrastOperator, constraints: &ConstraintSpec, gram_x: GramianSpec) -> Result<Self> {
        let shape = op.shape();
        gram_x.validate(shape)?;
        let param = Parametrization::new(&[shape.0, shape.1], constraints)?;
        Ok(Self { op, param, gram_x })
    }

    pub fn operator(&self) -> &PhaseContrastOperator {
        &self.op
    }

    pub fn parametrization(&self) -> &Parametrization {
        &self.param
    }

    pub fn field(&self, p: &Array1<f64>) -> Array2<Complex64> {
        Array2::from_shape_vec(self.op.shape(), self.param.embed(p)).expect("parametrization matches grid")
    }

    pub fn object(&self, p: &Array1<f64>) -> Object2D {
        Object2D::new(self.field(p))
    }

    /// Parameters of the projection of `obj` onto the constraint subspace.
    pub fn params_of(&self, obj: &Object2D) -> Result<Array1<f64>> {
        if obj.shape() != self.op.shape() {
            return Err(Error::shape(self.param.shape(), obj.f.shape()));
        }
        let flat: Vec<Complex64> = obj.f.iter().copied().collect();
        Ok(self.param.project_params(&flat))
    }
}

struct PcProblemLin<'a> {
    lin: PcLinearization<'a>,
    problem: &'a PhaseContrastProblem,
}

impl Linearization for PcProblemLin<'_> {
    fn apply(&self, h: &Array1<f64>) -> Array1<f64> {
        let out = self.lin.apply(&self.problem.field(h));
        Array1::from_iter(out)
    }

    fn apply_transpose(&self, g: &Array1<f64>) -> Array1<f64> {
        let g = g.to_shape(self.problem.op.shape()).expect("data length matches grid").to_owned();
        let t = self.lin.apply_transpose(&g);
        self.problem.param.embed_transpose(t.as_slice().expect("standard layout"))
    }
}

impl ForwardProblem for PhaseContrastProblem {
    fn param_len(&self) -> usize {
        self.param.len()
    }

    fn data_len(&self) -> usize {
        let (r, c) = self.op.shape();
        r * c
    }

    fn forward(&self, x: &Array1<f64>) -> Result<Array1<f64>> {
        if x.len() != self.param_len() {
            return Err(Error::shape(&[self.param_len()], &[x.len()]));
        }
        Ok(Array1::from_iter(self.op.forward(&self.field(x))?))
    }

    fn linearize<'a>(&'a self, x: &Array1<f64>) -> Result<Box<dyn Linearization + 'a>> {
        if x.len() != self.param_len() {
            return Err(Error::shape(&[self.param_len()], &[x.len()]));
        }
        let lin = self.op.linearize(&self.field(x))?;
        Ok(Box::new(PcProblemLin { lin, problem: self }))
    }

    fn gram(&self, x: &Array1<f64>) -> Array1<f64> {
        if self.gram_is_identity() {
            return x.clone();
        }
        let g = gram_apply_complex(&self.field(x), &self.gram_x).expect("Gramian validated at construction");
        self.param.embed_transpose(g.as_slice().expect("standard layout"))
    }

    fn gram_is_identity(&self) -> bool {
        self.gram_x.is_identity() && self.param.is_isometric()
    }

    fn sign_orientation(&self) -> Option<&[i8]> {
        self.param.orientation()
    }
}
