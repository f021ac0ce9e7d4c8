//! Variational moving-mesh adaptation on simplicial meshes of the unit box.
//!
//! A meshing functional `I[ξ] = ∫ G(J, det J, M) dx` is discretized directly
//! on the mesh, and its gradient with respect to the computational vertex
//! coordinates drives a mesh equation. Integrating that equation with the
//! physical mesh frozen, then mapping back by linear interpolation, moves
//! the physical mesh toward one that is uniform in a metric `M` built from
//! a recovered Hessian.
//!
//! ```
//! use meshadapt::{adapt, build_structured_mesh, AdaptationConfig, FieldSource, FunctionalSpec, MetricKind};
//!
//! let mesh = build_structured_mesh::<2>(8).unwrap();
//! let u = |p: &meshadapt::Point<2>| (10.0 * (p[0] - 0.5)).tanh();
//! let mut config = AdaptationConfig::for_dim(2);
//! config.max_outer_iters = 2;
//! let out = adapt(&mesh, &FieldSource::Analytic(&u), &FunctionalSpec::huang(), MetricKind::L2, &config).unwrap();
//! assert!(out.mesh.first_inverted().is_none());
//! assert!(out.quality.q_ali >= 1.0);
//! ```

pub mod error;
pub mod functional;
pub mod linalg;
pub mod mesh;
pub mod metric;
pub mod quadrature;
pub mod quality;
pub mod solver;
pub mod study;
pub mod testcase;

pub use error::{Error, Result};
pub use functional::{
    balancing_p, discrete_energy, eval_hr, eval_huang, eval_winslow, ElementMetric, FunctionalKind, FunctionalSpec,
    GDerivatives,
};
pub use linalg::{Mat, Point};
pub use mesh::{
    build_structured_mesh, edge_matrices, interpolate_new_mesh, BoundaryClass, EdgeMatrixPair, FacetId,
    SimplicialMesh,
};
pub use metric::{build_metric, build_metric_h1, build_metric_l2, recover_hessian, HessianField, MetricField, MetricKind};
pub use quadrature::l2_interp_error;
pub use quality::{mesh_quality, quality_element, quality_global, MeshQuality, QualityReport};
pub use solver::{
    adapt, adapt_with_reference, assemble_velocities, integrate_interval, local_velocities, project_boundary,
    AdaptationConfig, Adaptation, BoundaryConstraint, FieldSource, IterationDiagnostics, VelocityField,
};
pub use testcase::{eval_test_function, TestCase};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/meshes.md")]
    pub struct Meshes;
    #[doc = include_str!("../../../book/src/metric.md")]
    pub struct Metric;
    #[doc = include_str!("../../../book/src/functionals.md")]
    pub struct Functionals;
    #[doc = include_str!("../../../book/src/mesh-equation.md")]
    pub struct MeshEquation;
    #[doc = include_str!("../../../book/src/quality.md")]
    pub struct Quality;
    #[doc = include_str!("../../../book/src/experiments.md")]
    pub struct Experiments;
}
