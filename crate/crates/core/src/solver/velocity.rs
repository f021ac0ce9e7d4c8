use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::functional::{balancing_from_det, ElementMetric, FunctionalSpec};
use crate::linalg::{self, Mat, Point};
use crate::mesh::{BoundaryClass, EdgeMatrixPair, SimplicialMesh, Topology};
use crate::metric::MetricField;

use super::AdaptationConfig;

/// Nodal mesh velocities `dξ_i/dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField<const D: usize> {
    pub values: Vec<Point<D>>,
}

impl<const D: usize> VelocityField<D> {
    pub fn max_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// Local velocities `v_0, …, v_D` of one element.
///
/// Rows of `−E_K⁻¹ ∂G/∂J − ∂G/∂det J · det J · E_Kc⁻¹` give `v_1 … v_D`
/// and `v_0 = −Σ v_j`, so the element centroid does not move. They equal
/// `−∂G/∂ξ_j` evaluated at `J = E_Kc E_K⁻¹`.
pub fn local_velocities<const D: usize>(
    pair: &EdgeMatrixPair<D>,
    m_k: &Mat<D>,
    spec: &FunctionalSpec,
    sigma: f64,
) -> Result<Vec<Point<D>>> {
    let det_e = linalg::det(&pair.physical);
    if !(det_e > 0.0) {
        return Err(Error::ContractViolation(format!("det(E_K) = {det_e:e} <= 0")));
    }
    let e_inv = linalg::inverse_with_det(&pair.physical, det_e);
    let metric = ElementMetric::new(m_k)?;
    let (_, v) = element_terms(&e_inv, det_e, &pair.computational, &metric, spec, sigma)?;
    let mut out = vec![Point::<D>::zeros(); D + 1];
    for j in 0..D {
        out[j + 1] = v.row(j).transpose();
        let vj = out[j + 1];
        out[0] -= vj;
    }
    Ok(out)
}

/// `G` and the velocity block (row `j` is `v_(j+1)ᵀ`) for one element.
fn element_terms<const D: usize>(
    e_inv: &Mat<D>,
    det_e: f64,
    ec: &Mat<D>,
    metric: &ElementMetric<D>,
    spec: &FunctionalSpec,
    sigma: f64,
) -> Result<(f64, Mat<D>)> {
    let det_ec = linalg::det(ec);
    if !(det_ec > 0.0) {
        return Err(Error::Barrier {
            det_j: det_ec / det_e,
            element: None,
        });
    }
    let j = ec * e_inv;
    let det_j = det_ec / det_e;
    let gd = spec.evaluate(&j, det_j, metric, sigma)?;
    let mut v = -(e_inv * gd.dg_dj);
    if gd.dg_ddet != 0.0 {
        let ec_inv = linalg::inverse_with_det(ec, det_ec);
        v -= ec_inv * (gd.dg_ddet * det_j);
    }
    Ok((gd.g, v))
}

/// Physical mesh data that stay fixed while the computational mesh moves.
pub(crate) struct FrozenPhysical<'a, const D: usize> {
    topology: &'a Topology,
    e_inv: Vec<Mat<D>>,
    det_e: Vec<f64>,
    volume: Vec<f64>,
    metric: Vec<ElementMetric<D>>,
    /// `P_i / τ` per vertex.
    vertex_scale: Vec<f64>,
    sigma: f64,
    spec: FunctionalSpec,
}

impl<'a, const D: usize> FrozenPhysical<'a, D> {
    pub(crate) fn new(
        physical: &'a SimplicialMesh<D>,
        metric: &MetricField<D>,
        spec: &FunctionalSpec,
        tau: f64,
    ) -> Result<Self> {
        let per_element: Vec<(Mat<D>, f64, ElementMetric<D>)> = (0..physical.n_elements())
            .into_par_iter()
            .map(|k| {
                let e = physical.edge_matrix(k);
                let det = linalg::det(&e);
                if !(det > 0.0) {
                    return Err(Error::InvalidMesh { element: k, det });
                }
                let em = ElementMetric::new(&metric.element_metric(physical, k))?;
                Ok((linalg::inverse_with_det(&e, det), det, em))
            })
            .collect::<Result<_>>()?;
        let fact = crate::mesh::factorial(D);
        let mut e_inv = Vec::with_capacity(per_element.len());
        let mut det_e = Vec::with_capacity(per_element.len());
        let mut volume = Vec::with_capacity(per_element.len());
        let mut element_metric = Vec::with_capacity(per_element.len());
        for (inv, det, em) in per_element {
            e_inv.push(inv);
            det_e.push(det);
            volume.push(det / fact);
            element_metric.push(em);
        }
        let vertex_scale = metric
            .tensors()
            .iter()
            .map(|m| balancing_from_det(spec, linalg::det(m), D) / tau)
            .collect();
        Ok(FrozenPhysical {
            topology: physical.topology(),
            e_inv,
            det_e,
            volume,
            metric: element_metric,
            vertex_scale,
            sigma: metric.sigma(),
            spec: *spec,
        })
    }

    /// Energy `I_h` and `|K|`-weighted velocity blocks at the given computational vertices.
    pub(crate) fn evaluate(&self, xi: &[Point<D>]) -> Result<(f64, Vec<Mat<D>>)> {
        let terms: Vec<(f64, Mat<D>)> = (0..self.topology.n_elements())
            .into_par_iter()
            .map(|k| {
                let ec = edge_matrix(self.topology, xi, k);
                let (g, v) = element_terms(
                    &self.e_inv[k],
                    self.det_e[k],
                    &ec,
                    &self.metric[k],
                    &self.spec,
                    self.sigma,
                )
                .map_err(|e| e.with_element(k))?;
                Ok((self.volume[k] * g, v * self.volume[k]))
            })
            .collect::<Result<_>>()?;
        let energy = terms.iter().map(|t| t.0).sum();
        Ok((energy, terms.into_iter().map(|t| t.1).collect()))
    }

    /// Rate of decrease of `I_h` along `v`: `Σ_i |v_i|² / (P_i/τ)`.
    pub(crate) fn descent_rate(&self, v: &[Point<D>]) -> f64 {
        v.iter().zip(&self.vertex_scale).map(|(vi, s)| vi.norm_squared() / s).sum()
    }

    /// `(P_i/τ) Σ_{K∈ω_i} |K| v_(i_K)^K`, summed in patch order.
    pub(crate) fn assemble(&self, blocks: &[Mat<D>]) -> Vec<Point<D>> {
        (0..self.topology.n_vertices())
            .map(|i| {
                let mut sum = Point::<D>::zeros();
                for &(k, local) in self.topology.patch(i) {
                    let v = &blocks[k];
                    if local == 0 {
                        for j in 0..D {
                            sum -= v.row(j).transpose();
                        }
                    } else {
                        sum += v.row(local - 1).transpose();
                    }
                }
                sum * self.vertex_scale[i]
            })
            .collect()
    }
}

fn edge_matrix<const D: usize>(topology: &Topology, xi: &[Point<D>], k: usize) -> Mat<D> {
    let el = topology.element(k);
    let x0 = &xi[el[0]];
    let mut e = Mat::<D>::zeros();
    for j in 0..D {
        e.set_column(j, &(xi[el[j + 1]] - x0));
    }
    e
}

/// Nodal velocities before boundary projection.
pub fn assemble_velocities<const D: usize>(
    physical: &SimplicialMesh<D>,
    computational: &SimplicialMesh<D>,
    metric: &MetricField<D>,
    spec: &FunctionalSpec,
    config: &AdaptationConfig,
) -> Result<VelocityField<D>> {
    if !physical.shares_connectivity(computational) {
        return Err(Error::ContractViolation(
            "physical and computational meshes have different connectivity".into(),
        ));
    }
    config.validate()?;
    let frozen = FrozenPhysical::new(physical, metric, spec, config.tau)?;
    let (_, blocks) = frozen.evaluate(computational.vertices())?;
    Ok(VelocityField {
        values: frozen.assemble(&blocks),
    })
}

/// Per-vertex orthogonal projector onto the directions a vertex may move in.
#[derive(Debug, Clone)]
pub struct BoundaryConstraint<const D: usize> {
    fixed: Vec<u8>,
}

impl<const D: usize> BoundaryConstraint<D> {
    pub fn from_mesh(mesh: &SimplicialMesh<D>) -> Self {
        BoundaryConstraint {
            fixed: (0..mesh.n_vertices())
                .map(|i| mesh.boundary_class(i).fixed_axes(D))
                .collect(),
        }
    }

    pub fn from_classes(classes: &[BoundaryClass]) -> Self {
        BoundaryConstraint {
            fixed: classes.iter().map(|c| c.fixed_axes(D)).collect(),
        }
    }

    /// The projector as a matrix: diagonal with zeros on pinned axes.
    pub fn projector(&self, i: usize) -> Mat<D> {
        let mut p = Mat::<D>::identity();
        for a in 0..D {
            if self.fixed[i] & (1 << a) != 0 {
                p[(a, a)] = 0.0;
            }
        }
        p
    }

    pub(crate) fn apply(&self, values: &mut [Point<D>]) {
        for (v, &mask) in values.iter_mut().zip(&self.fixed) {
            for a in 0..D {
                if mask & (1 << a) != 0 {
                    v[a] = 0.0;
                }
            }
        }
    }
}

/// Zero the velocity components normal to each vertex's boundary entity.
pub fn project_boundary<const D: usize>(
    mut v: VelocityField<D>,
    constraints: &BoundaryConstraint<D>,
) -> VelocityField<D> {
    constraints.apply(&mut v.values);
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functional::FunctionalKind;
    use crate::mesh::{build_structured_mesh, FacetId};

    #[test]
    fn unit_triangle_winslow() {
        let pair = EdgeMatrixPair {
            physical: Mat::<2>::identity(),
            computational: Mat::<2>::identity(),
        };
        let v = local_velocities(&pair, &Mat::<2>::identity(), &FunctionalSpec::winslow(), 1.0).unwrap();
        assert_eq!(v[1], Point::<2>::new(-1.0, 0.0));
        assert_eq!(v[2], Point::<2>::new(0.0, -1.0));
        assert_eq!(v[0], Point::<2>::new(1.0, 1.0));
    }

    #[test]
    fn local_velocities_sum_to_zero() {
        let pair = EdgeMatrixPair {
            physical: Mat::<3>::new(1.0, 0.2, 0.1, 0.0, 0.9, -0.3, 0.1, 0.0, 1.1),
            computational: Mat::<3>::new(0.8, 0.1, 0.0, 0.2, 1.0, 0.1, 0.0, -0.1, 0.7),
        };
        let m = Mat::<3>::new(2.0, 0.3, 0.0, 0.3, 1.0, 0.1, 0.0, 0.1, 1.5);
        for kind in FunctionalKind::ALL {
            let v = local_velocities(&pair, &m, &FunctionalSpec::new(kind), 0.7).unwrap();
            let s = v.iter().fold(Point::<3>::zeros(), |a, b| a + b);
            assert!(s.norm() <= 1e-14 * v[0].norm().max(1.0), "{kind}: {s}");
        }
    }

    #[test]
    fn uniform_mesh_has_no_interior_velocity() {
        let mesh = build_structured_mesh::<2>(6).unwrap();
        let metric = MetricField::from_tensors(&mesh, vec![Mat::<2>::new(3.0, 1.0, 1.0, 2.0); mesh.n_vertices()], 1.0);
        let config = AdaptationConfig::for_dim(2);
        for kind in FunctionalKind::ALL {
            let v = assemble_velocities(&mesh, &mesh, &metric, &FunctionalSpec::new(kind), &config).unwrap();
            for i in 0..mesh.n_vertices() {
                if !mesh.boundary_class(i).is_boundary() {
                    assert!(v.values[i].norm() < 1e-12, "{kind} {i}: {}", v.values[i]);
                }
            }
        }
    }

    #[test]
    fn projection_examples() {
        let c2 = BoundaryConstraint::<2>::from_classes(&[
            BoundaryClass::Corner,
            BoundaryClass::Facet(FacetId::new(1, false)),
            BoundaryClass::Interior,
        ]);
        let v = VelocityField {
            values: vec![Point::<2>::new(3.0, 4.0); 3],
        };
        let p = project_boundary(v, &c2);
        assert_eq!(p.values[0], Point::<2>::new(0.0, 0.0));
        assert_eq!(p.values[1], Point::<2>::new(3.0, 0.0));
        assert_eq!(p.values[2], Point::<2>::new(3.0, 4.0));

        let c3 = BoundaryConstraint::<3>::from_classes(&[BoundaryClass::Edge3D([
            FacetId::new(0, false),
            FacetId::new(1, false),
        ])]);
        let p = project_boundary(
            VelocityField {
                values: vec![Point::<3>::new(1.0, 2.0, 3.0)],
            },
            &c3,
        );
        assert_eq!(p.values[0], Point::<3>::new(0.0, 0.0, 3.0));
    }

    #[test]
    fn projectors_are_symmetric_and_idempotent() {
        let mesh = build_structured_mesh::<3>(3).unwrap();
        let c = BoundaryConstraint::from_mesh(&mesh);
        for i in 0..mesh.n_vertices() {
            let p = c.projector(i);
            assert_eq!(p, p.transpose());
            assert_eq!(p * p, p);
        }
    }

    #[test]
    fn velocity_is_linear_in_inverse_tau() {
        let mesh = build_structured_mesh::<2>(5).unwrap();
        let comp = mesh.with_vertices(
            mesh.vertices()
                .iter()
                .map(|p| Point::<2>::new(p[0], p[1] + 0.05 * (std::f64::consts::PI * p[0]).sin() * p[1] * (1.0 - p[1])))
                .collect(),
        );
        let metric = MetricField::identity(&mesh);
        let spec = FunctionalSpec::huang();
        let mut config = AdaptationConfig::for_dim(2);
        let v1 = assemble_velocities(&mesh, &comp, &metric, &spec, &config).unwrap();
        config.tau /= 2.0;
        let v2 = assemble_velocities(&mesh, &comp, &metric, &spec, &config).unwrap();
        for (a, b) in v1.values.iter().zip(&v2.values) {
            assert_eq!(a * 2.0, *b);
        }
    }
}
