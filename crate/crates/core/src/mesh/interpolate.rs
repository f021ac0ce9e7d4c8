use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::Point;

use super::{PointLocator, SimplicialMesh};

/// New physical mesh `Ψ(reference)`, where `Ψ` is the piecewise linear map
/// taking the computational mesh onto the physical one.
///
/// Each reference vertex is located in the computational mesh and the
/// physical coordinates are interpolated with its barycentric weights.
/// Coordinates pinned by the vertex's boundary class are copied from the
/// reference vertex, so boundary vertices stay exactly on their facet, edge
/// or corner (the physical and computational domains are the same box).
pub fn interpolate_new_mesh<const D: usize>(
    physical: &SimplicialMesh<D>,
    computational: &SimplicialMesh<D>,
    reference: &SimplicialMesh<D>,
) -> Result<SimplicialMesh<D>> {
    if !physical.shares_connectivity(computational) || !physical.shares_connectivity(reference) {
        return Err(Error::ContractViolation(
            "physical, computational and reference meshes must share connectivity".into(),
        ));
    }
    computational.check_orientation()?;

    let vertices = (0..reference.n_vertices())
        .into_par_iter()
        .map(|i| {
            let target = reference.vertex(i);
            let start = computational.patch(i).first().map_or(0, |&(k, _)| k);
            let loc = PointLocator::new(computational).locate_from(target, start)?;
            let el = computational.element(loc.element);
            let mut x = Point::<D>::zeros();
            for (&v, &lam) in el.iter().zip(loc.barycentric()) {
                x += physical.vertex(v) * lam;
            }
            let fixed = reference.boundary_class(i).fixed_axes(D);
            for a in 0..D {
                if fixed & (1 << a) != 0 {
                    x[a] = target[a];
                }
            }
            Ok(x)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(reference.with_vertices(vertices))
}
