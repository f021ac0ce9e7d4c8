mod common;

use meshadapt::linalg::{self, Mat, Point};
use meshadapt::quality::volume_weighted_mean;
use meshadapt::study::perturbed_mesh;
use meshadapt::{
    assemble_velocities, build_structured_mesh, l2_interp_error, local_velocities, mesh_quality, quality_element,
    AdaptationConfig, BoundaryConstraint, EdgeMatrixPair, FunctionalSpec, MetricField, SimplicialMesh, TestCase,
};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;

fn spec_for(i: usize) -> FunctionalSpec {
    [FunctionalSpec::winslow(), FunctionalSpec::huang(), FunctionalSpec::huang_russell()][i]
}

fn random_metric<const D: usize>(mesh: &SimplicialMesh<D>, rng: &mut StdRng) -> MetricField<D> {
    let tensors = (0..mesh.n_vertices()).map(|_| common::random_spd::<D>(rng)).collect();
    MetricField::from_tensors(mesh, tensors, 1.0)
}

fn random_pair<const D: usize>(rng: &mut StdRng) -> EdgeMatrixPair<D> {
    EdgeMatrixPair {
        physical: common::random_jacobian::<D>(rng),
        computational: common::random_jacobian::<D>(rng),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn local_velocities_sum_to_zero(seed in any::<u64>(), f in 0usize..3) {
        let mut rng = StdRng::seed_from_u64(seed);
        let spec = spec_for(f);
        let pair = random_pair::<3>(&mut rng);
        let v = local_velocities(&pair, &common::random_spd::<3>(&mut rng), &spec, 1.3).unwrap();
        let sum: Point<3> = v.iter().sum();
        let scale = v.iter().map(|x| x.norm()).fold(0.0, f64::max);
        prop_assert!(sum.norm() <= 1e-13 * scale, "{sum:?}");
    }

    #[test]
    fn alignment_quality_is_at_least_one(seed in any::<u64>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let (_, ali2) = quality_element(&random_pair::<2>(&mut rng), &common::random_spd::<2>(&mut rng), 1.0, 1.0);
        let (_, ali3) = quality_element(&random_pair::<3>(&mut rng), &common::random_spd::<3>(&mut rng), 1.0, 1.0);
        prop_assert!(ali2 >= 1.0 - 1e-12 && ali3 >= 1.0 - 1e-12, "{ali2} {ali3}");
    }

    #[test]
    fn projectors_are_symmetric_and_idempotent(n in 2usize..5) {
        let mesh = build_structured_mesh::<3>(n).unwrap();
        let c = BoundaryConstraint::from_mesh(&mesh);
        for i in 0..mesh.n_vertices() {
            let p = c.projector(i);
            prop_assert_eq!(p, p.transpose());
            prop_assert_eq!(p * p, p);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn weighted_mean_equidistribution_is_one(seed in any::<u64>(), n in 3usize..9) {
        let mut rng = StdRng::seed_from_u64(seed);
        let physical = perturbed_mesh::<2>(n, 0.2, seed).unwrap();
        let computational = perturbed_mesh::<2>(n, 0.2, seed ^ 0x5555).unwrap();
        let metric = random_metric(&physical, &mut rng);
        let q = mesh_quality(&physical, &computational, &metric).unwrap();
        let w: Vec<f64> = (0..computational.n_elements()).map(|k| computational.element_volume(k)).collect();
        let mean = volume_weighted_mean(&q.per_element_eq, &w);
        prop_assert!((mean - 1.0).abs() <= 1e-10, "{mean}");
        prop_assert!(q.per_element_ali.iter().all(|&a| a >= 1.0 - 1e-12));
    }

    #[test]
    fn velocities_are_invariant_under_metric_scaling(seed in any::<u64>(), f in 0usize..3) {
        let mut rng = StdRng::seed_from_u64(seed);
        let spec = spec_for(f);
        let physical = perturbed_mesh::<2>(5, 0.2, seed).unwrap();
        let computational = perturbed_mesh::<2>(5, 0.2, seed.wrapping_add(1)).unwrap();
        let metric = random_metric(&physical, &mut rng);
        let scaled = metric.scaled(&physical, 10.0);
        let config = AdaptationConfig::for_dim(2);
        let a = assemble_velocities(&physical, &computational, &metric, &spec, &config).unwrap();
        let b = assemble_velocities(&physical, &computational, &scaled, &spec, &config).unwrap();
        let scale = a.max_norm();
        for (x, y) in a.values.iter().zip(&b.values) {
            prop_assert!((x - y).norm() <= 1e-10 * scale);
        }
    }

    #[test]
    fn interpolation_error_ignores_numbering(seed in any::<u64>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let mesh = perturbed_mesh::<2>(6, 0.2, seed).unwrap();
        let case = TestCase::new(1).unwrap();
        let u = |p: &Point<2>| case.eval(p.as_slice());

        let mut relabel: Vec<usize> = (0..mesh.n_vertices()).collect();
        relabel.shuffle(&mut rng);
        let mut vertices = vec![Point::<2>::zeros(); mesh.n_vertices()];
        for (old, &new) in relabel.iter().enumerate() {
            vertices[new] = *mesh.vertex(old);
        }
        let mut order: Vec<usize> = (0..mesh.n_elements()).collect();
        order.shuffle(&mut rng);
        let elements = order.iter().flat_map(|&k| mesh.element(k).iter().map(|&v| relabel[v])).collect();
        let renumbered = SimplicialMesh::new(vertices, elements).unwrap();

        let a = l2_interp_error(&mesh, u);
        let b = l2_interp_error(&renumbered, u);
        prop_assert!((a - b).abs() <= 1e-12 * a, "{a} {b}");
    }
}

#[test]
fn harmonic_limit_of_huang() {
    // θ = 1/2 and dp = 2 leave only the harmonic-map term
    let mut rng = StdRng::seed_from_u64(5);
    let spec = FunctionalSpec { theta: 0.5, p: 1.0, ..FunctionalSpec::huang() };
    for _ in 0..20 {
        let j = common::random_jacobian::<2>(&mut rng);
        let m = common::random_spd::<2>(&mut rng);
        let em = meshadapt::ElementMetric::new(&m).unwrap();
        let g = spec.evaluate(&j, linalg::det(&j), &em, 1.0).unwrap().g;
        let m_inv: Mat<2> = linalg::inverse(&m).unwrap();
        let expect = 0.5 * linalg::det(&m).sqrt() * (j * m_inv * j.transpose()).trace();
        assert!((g - expect).abs() <= 1e-12 * expect);
    }
}
