//! Finite-difference oracles shared by the integration tests and the acceptance harness.
#![allow(dead_code)]

use meshadapt::linalg::{self, Mat, Point};
use meshadapt::solver::metric_for;
use meshadapt::study::perturbed_mesh;
use meshadapt::{
    assemble_velocities, balancing_p, discrete_energy, AdaptationConfig, ElementMetric, FieldSource, FunctionalSpec,
    MetricField, MetricKind, SimplicialMesh, TestCase,
};
use rand::rngs::StdRng;
use rand::Rng;

/// Random SPD matrix `Q diag(λ) Qᵀ` with eigenvalues in `[0.1, 10]`.
pub fn random_spd<const D: usize>(rng: &mut StdRng) -> Mat<D> {
    let a = Mat::<D>::from_fn(|_, _| rng.gen_range(-1.0..1.0));
    let (_, q) = linalg::sym_eigen(&linalg::symmetrize(&a));
    let lambda = Mat::<D>::from_diagonal(&Point::<D>::from_fn(|_, _| 10f64.powf(rng.gen_range(-1.0..1.0))));
    linalg::symmetrize(&(q * lambda * q.transpose()))
}

/// Random matrix with `det ∈ [0.1, 10]`.
pub fn random_jacobian<const D: usize>(rng: &mut StdRng) -> Mat<D> {
    loop {
        let j = Mat::<D>::identity() + Mat::<D>::from_fn(|_, _| rng.gen_range(-0.6..0.6));
        let target = 10f64.powf(rng.gen_range(-1.0..1.0));
        let det = linalg::det(&j);
        if det > 0.05 {
            return j * (target / det).powf(1.0 / D as f64);
        }
    }
}

/// Worst relative error of the analytic `(∂G/∂J, ∂G/∂det J)` against central
/// differences of `G` over `samples` random `(J, M, σ)`.
pub fn functional_derivative_error<const D: usize>(spec: &FunctionalSpec, samples: usize, rng: &mut StdRng) -> f64 {
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let j = random_jacobian::<D>(rng);
        let det_j = linalg::det(&j);
        let em = ElementMetric::new(&random_spd::<D>(rng)).unwrap();
        let sigma = 10f64.powf(rng.gen_range(-1.0..1.0));
        let g = |j: &Mat<D>, det: f64| spec.evaluate(j, det, &em, sigma).unwrap().g;
        let exact = spec.evaluate(&j, det_j, &em, sigma).unwrap();

        // entry (a, b) of dg_dj is ∂G/∂J_(b,a)
        let mut fd = Mat::<D>::zeros();
        for a in 0..D {
            for b in 0..D {
                let h = 1e-6 * j[(b, a)].abs().max(1.0);
                let (mut jp, mut jm) = (j, j);
                jp[(b, a)] += h;
                jm[(b, a)] -= h;
                fd[(a, b)] = (g(&jp, det_j) - g(&jm, det_j)) / (2.0 * h);
            }
        }
        worst = worst.max((exact.dg_dj - fd).norm() / fd.norm());

        let h = 1e-6 * det_j;
        let fd_det = (g(&j, det_j + h) - g(&j, det_j - h)) / (2.0 * h);
        let err = if fd_det == 0.0 && exact.dg_ddet == 0.0 {
            0.0
        } else {
            (exact.dg_ddet - fd_det).abs() / fd_det.abs()
        };
        worst = worst.max(err);
    }
    worst
}

/// Physical mesh, computational mesh and metric for the gradient check: two
/// differently perturbed structured meshes and the metric of the test case.
pub fn gradient_setup<const D: usize>(n: usize, case: TestCase) -> (SimplicialMesh<D>, SimplicialMesh<D>, MetricField<D>) {
    let physical = perturbed_mesh::<D>(n, 0.2, 11).unwrap();
    let computational = perturbed_mesh::<D>(n, 0.2, 23).unwrap();
    let u = move |p: &Point<D>| case.eval(p.as_slice());
    let metric = metric_for(&physical, &FieldSource::Analytic(&u), MetricKind::L2, &AdaptationConfig::for_dim(D)).unwrap();
    (physical, computational, metric)
}

/// Worst relative error of `−τ/P_i` times the assembled velocity against the
/// central-difference gradient of `I_h` at `vertices` random vertices.
pub fn gradient_assembly_error<const D: usize>(
    physical: &SimplicialMesh<D>,
    computational: &SimplicialMesh<D>,
    metric: &MetricField<D>,
    spec: &FunctionalSpec,
    vertices: usize,
    rng: &mut StdRng,
) -> f64 {
    let config = AdaptationConfig::for_dim(D);
    let v = assemble_velocities(physical, computational, metric, spec, &config).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..vertices {
        let i = rng.gen_range(0..physical.n_vertices());
        let scale = -config.tau / balancing_p(spec, metric.vertex(i));
        let analytic = v.values[i] * scale;
        let mut fd = Point::<D>::zeros();
        for a in 0..D {
            let h = 1e-6;
            let shifted = |s: f64| {
                let mut xi = computational.vertices().to_vec();
                xi[i][a] += s;
                discrete_energy(physical, &computational.with_vertices(xi), metric, spec).unwrap()
            };
            fd[a] = (shifted(h) - shifted(-h)) / (2.0 * h);
        }
        worst = worst.max((analytic - fd).norm() / fd.norm());
    }
    worst
}
