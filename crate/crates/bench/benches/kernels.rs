use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use ndarray::{Array1, Array2, Array3};
use num_complex::Complex64;
use phasenewton::gridmath::{Direction, FresnelPropagator};
use phasenewton::operators::{radon, PhaseContrastOperator, PhaseContrastProblem};
use phasenewton::solver::{newton_step_cg, ForwardProblem, StepInput, StepParams};
use phasenewton::{ConstraintSpec, GramianSpec, ImagingGeometry, Padding};

fn field(n: usize) -> Array2<Complex64> {
    Array2::from_shape_fn((n, n), |(i, j)| Complex64::new(((i * 7 + j * 3) % 11) as f64 * 0.01, 0.0))
}

fn propagate(c: &mut Criterion) {
    let geom = ImagingGeometry::new(2e-3).unwrap();
    for (n, pad) in [(256, Padding::None), (256, Padding::Replicate), (512, Padding::None)] {
        let p = FresnelPropagator::new((n, n), geom, pad).unwrap();
        let psi = field(n);
        c.bench_function(&format!("propagate {n} {pad:?}"), |b| b.iter(|| p.propagate(black_box(&psi), Direction::Forward)));
    }
}

fn project(c: &mut Criterion) {
    let vol = Array3::from_shape_fn((64, 64, 64), |(i, j, k)| Complex64::new(((i + j + k) % 5) as f64, 0.0));
    c.bench_function("radon 64^3 one angle", |b| b.iter(|| radon(black_box(&vol), &[0.3], 1.0).unwrap()));
}

fn newton_step(c: &mut Criterion) {
    let n = 128;
    let op = PhaseContrastOperator::new((n, n), ImagingGeometry::new(2e-3).unwrap(), Padding::None).unwrap();
    let prob = PhaseContrastProblem::new(op, &ConstraintSpec::default(), GramianSpec::Identity).unwrap();
    let x0 = Array1::zeros(prob.param_len());
    let model = prob.forward(&x0).unwrap();
    let data = model.mapv(|v| v + 0.01);
    let w = Array1::ones(data.len());
    c.bench_function("newton step 128^2", |b| {
        b.iter(|| {
            let input = StepInput { x_k: &x0, x_0: &x0, model_k: &model, data: &data, weights: &w };
            let params = StepParams { alpha: 0.1, prior_weight: 1.0, gamma: 0.0, cg_tol: 1e-3, cg_max: 20 };
            newton_step_cg(&prob, input, params).unwrap()
        })
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = propagate, project, newton_step
}
criterion_main!(benches);
