use crate::error::{Error, Result};
use crate::linalg::{self, Point};

use super::SimplicialMesh;

/// Structured simplicial mesh of the unit box with `n` cells per side.
///
/// In 2D each square is cut along its SW→NE diagonal (`2n²` triangles); in
/// 3D each cube is split into the 6 Kuhn tetrahedra around its main diagonal
/// (`6n³` tetrahedra). Both patterns are conforming and translation invariant.
pub fn build_structured_mesh<const D: usize>(n: usize) -> Result<SimplicialMesh<D>> {
    const { linalg::assert_supported_dim::<D>() };
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 cells per side, got {n}")));
    }
    let h = 1.0 / n as f64;
    let np = n + 1;
    let n_vertices = np.pow(D as u32);

    let index = |c: &[usize]| -> usize {
        let mut idx = 0;
        for a in (0..D).rev() {
            idx = idx * np + c[a];
        }
        idx
    };

    let mut vertices = Vec::with_capacity(n_vertices);
    for idx in 0..n_vertices {
        let mut p = Point::<D>::zeros();
        let mut rest = idx;
        for a in 0..D {
            let c = rest % np;
            rest /= np;
            // exact 0 and 1 on the boundary
            p[a] = if c == n { 1.0 } else { c as f64 * h };
        }
        vertices.push(p);
    }

    let mut elements = Vec::with_capacity((D + 1) * n.pow(D as u32) * factorial_usize(D));
    let mut cell = [0usize; 3];
    for cidx in 0..n.pow(D as u32) {
        let mut rest = cidx;
        for c in cell.iter_mut().take(D) {
            *c = rest % n;
            rest /= n;
        }
        match D {
            2 => {
                let (i, j) = (cell[0], cell[1]);
                let a = index(&[i, j]);
                let b = index(&[i + 1, j]);
                let c = index(&[i + 1, j + 1]);
                let d = index(&[i, j + 1]);
                elements.extend_from_slice(&[a, b, c, a, c, d]);
            }
            3 => {
                const PERMS: [[usize; 3]; 6] =
                    [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
                for perm in PERMS {
                    let mut corner = [cell[0], cell[1], cell[2]];
                    let mut tet = [index(&corner), 0, 0, 0];
                    for (s, &axis) in perm.iter().enumerate() {
                        corner[axis] += 1;
                        tet[s + 1] = index(&corner);
                    }
                    // odd permutations give a negatively oriented path
                    if permutation_is_odd(&perm) {
                        tet.swap(1, 2);
                    }
                    elements.extend_from_slice(&tet);
                }
            }
            _ => unreachable!(),
        }
    }

    SimplicialMesh::new(vertices, elements)
}

fn permutation_is_odd(p: &[usize; 3]) -> bool {
    let mut inversions = 0;
    for i in 0..3 {
        for j in i + 1..3 {
            if p[i] > p[j] {
                inversions += 1;
            }
        }
    }
    inversions % 2 == 1
}

fn factorial_usize(d: usize) -> usize {
    (1..=d).product()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::BoundaryClass;

    #[test]
    fn counts() {
        let m = build_structured_mesh::<2>(2).unwrap();
        assert_eq!((m.n_vertices(), m.n_elements()), (9, 8));
        let m = build_structured_mesh::<3>(2).unwrap();
        assert_eq!((m.n_vertices(), m.n_elements()), (27, 48));
    }

    #[test]
    fn rejects_too_coarse() {
        assert!(matches!(build_structured_mesh::<2>(1), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn volumes_partition_the_box() {
        let m2 = build_structured_mesh::<2>(7).unwrap();
        assert!((m2.total_volume() - 1.0).abs() < 1e-12);
        let m3 = build_structured_mesh::<3>(5).unwrap();
        assert!((m3.total_volume() - 1.0).abs() < 1e-12);
        assert!(m3.first_inverted().is_none());
    }

    #[test]
    fn boundary_class_counts() {
        let m = build_structured_mesh::<3>(4).unwrap();
        let mut counts = [0usize; 4];
        for i in 0..m.n_vertices() {
            counts[match m.boundary_class(i) {
                BoundaryClass::Interior => 0,
                BoundaryClass::Facet(_) => 1,
                BoundaryClass::Edge3D(_) => 2,
                BoundaryClass::Corner => 3,
            }] += 1;
        }
        assert_eq!(counts, [27, 6 * 9, 12 * 3, 8]);
    }

    #[test]
    fn kuhn_mesh_is_conforming() {
        // every interior face is shared by exactly two tets
        let m = build_structured_mesh::<3>(3).unwrap();
        let mut boundary_faces = 0;
        for k in 0..m.n_elements() {
            for j in 0..4 {
                if m.topology().neighbor(k, j).is_none() {
                    boundary_faces += 1;
                }
            }
        }
        assert_eq!(boundary_faces, 6 * 2 * 9);
    }
}
