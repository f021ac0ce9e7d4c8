//! Simplicial meshes of the unit box.
//!
//! A [`SimplicialMesh`] is a vertex array plus a shared [`Topology`]. The
//! physical, computational and reference meshes of one adaptation run all
//! point at the same topology, so "same connectivity" is a pointer check.

mod interpolate;
mod locate;
mod structured;
pub mod vtk;

use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Point};

pub use interpolate::interpolate_new_mesh;
pub use locate::{Location, PointLocator};
pub use structured::build_structured_mesh;

/// Distance from a box facet below which a vertex counts as lying on it.
pub const BOUNDARY_TOLERANCE: f64 = 1e-12;

/// Marker for "no neighbour" in the face adjacency table.
const NONE: usize = usize::MAX;

/// Facet of the unit box: `2 * axis + side`, side 0 is `x_axis = 0`, side 1 is `x_axis = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FacetId(pub u8);

impl FacetId {
    pub fn new(axis: usize, upper: bool) -> Self {
        FacetId((2 * axis + usize::from(upper)) as u8)
    }

    pub fn axis(self) -> usize {
        usize::from(self.0 / 2)
    }

    /// Coordinate value of the facet plane.
    pub fn value(self) -> f64 {
        f64::from(self.0 % 2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryClass {
    Interior,
    Facet(FacetId),
    /// A box edge in 3D, identified by the two facets meeting there.
    Edge3D([FacetId; 2]),
    Corner,
}

impl BoundaryClass {
    /// Bit `a` is set when the coordinate along axis `a` is pinned.
    pub fn fixed_axes(self, dim: usize) -> u8 {
        match self {
            BoundaryClass::Interior => 0,
            BoundaryClass::Facet(f) => 1 << f.axis(),
            BoundaryClass::Edge3D([f, g]) => (1 << f.axis()) | (1 << g.axis()),
            BoundaryClass::Corner => ((1u16 << dim) - 1) as u8,
        }
    }

    pub fn is_boundary(self) -> bool {
        !matches!(self, BoundaryClass::Interior)
    }
}

fn classify<const D: usize>(x: &Point<D>) -> BoundaryClass {
    let mut facets = Vec::with_capacity(D);
    for a in 0..D {
        if x[a].abs() <= BOUNDARY_TOLERANCE {
            facets.push(FacetId::new(a, false));
        } else if (x[a] - 1.0).abs() <= BOUNDARY_TOLERANCE {
            facets.push(FacetId::new(a, true));
        }
    }
    match facets.len() {
        0 => BoundaryClass::Interior,
        1 => BoundaryClass::Facet(facets[0]),
        n if n >= D => BoundaryClass::Corner,
        _ => BoundaryClass::Edge3D([facets[0], facets[1]]),
    }
}

/// Connectivity shared by every mesh of one adaptation run.
#[derive(Debug)]
pub struct Topology {
    dim: usize,
    n_vertices: usize,
    elements: Vec<usize>,
    patch_offsets: Vec<usize>,
    patch_entries: Vec<(usize, usize)>,
    neighbors: Vec<usize>,
    boundary: Vec<BoundaryClass>,
}

impl Topology {
    fn build(dim: usize, n_vertices: usize, elements: Vec<usize>, boundary: Vec<BoundaryClass>) -> Self {
        let nloc = dim + 1;
        let n_elements = elements.len() / nloc;

        let mut counts = vec![0usize; n_vertices + 1];
        for &v in &elements {
            counts[v + 1] += 1;
        }
        for i in 0..n_vertices {
            counts[i + 1] += counts[i];
        }
        let patch_offsets = counts.clone();
        let mut fill = counts;
        let mut patch_entries = vec![(0, 0); elements.len()];
        for k in 0..n_elements {
            for j in 0..nloc {
                let v = elements[k * nloc + j];
                patch_entries[fill[v]] = (k, j);
                fill[v] += 1;
            }
        }

        let mut neighbors = vec![NONE; elements.len()];
        let mut faces: HashMap<[usize; 3], (usize, usize)> = HashMap::with_capacity(elements.len());
        for k in 0..n_elements {
            let el = &elements[k * nloc..(k + 1) * nloc];
            for j in 0..nloc {
                let mut key = [NONE; 3];
                let mut m = 0;
                for (l, &v) in el.iter().enumerate() {
                    if l != j {
                        key[m] = v;
                        m += 1;
                    }
                }
                key[..dim].sort_unstable();
                if let Some((k2, j2)) = faces.remove(&key) {
                    neighbors[k * nloc + j] = k2;
                    neighbors[k2 * nloc + j2] = k;
                } else {
                    faces.insert(key, (k, j));
                }
            }
        }

        Topology {
            dim,
            n_vertices,
            elements,
            patch_offsets,
            patch_entries,
            neighbors,
            boundary,
        }
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len() / (self.dim + 1)
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn element(&self, k: usize) -> &[usize] {
        let nloc = self.dim + 1;
        &self.elements[k * nloc..(k + 1) * nloc]
    }

    /// Elements containing vertex `i`, each with the local index of `i` in it.
    pub fn patch(&self, i: usize) -> &[(usize, usize)] {
        &self.patch_entries[self.patch_offsets[i]..self.patch_offsets[i + 1]]
    }

    /// Element across the face opposite local vertex `j` of element `k`.
    pub fn neighbor(&self, k: usize, j: usize) -> Option<usize> {
        let n = self.neighbors[k * (self.dim + 1) + j];
        (n != NONE).then_some(n)
    }

    pub fn boundary_class(&self, i: usize) -> BoundaryClass {
        self.boundary[i]
    }

    /// Vertices sharing an element with `i` (excluding `i`), sorted.
    pub fn vertex_neighbors(&self, i: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .patch(i)
            .iter()
            .flat_map(|&(k, _)| self.element(k).iter().copied())
            .filter(|&v| v != i)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

#[derive(Debug, Clone)]
pub struct SimplicialMesh<const D: usize> {
    topology: Arc<Topology>,
    vertices: Vec<Point<D>>,
}

impl<const D: usize> SimplicialMesh<D> {
    /// Build a mesh of (a subset of) the unit box from vertices and a flat
    /// element list with `D + 1` indices per element.
    ///
    /// Boundary classes are derived from the vertex coordinates. Every
    /// element must be positively oriented.
    pub fn new(vertices: Vec<Point<D>>, elements: Vec<usize>) -> Result<Self> {
        const { linalg::assert_supported_dim::<D>() };
        if elements.is_empty() || elements.len() % (D + 1) != 0 {
            return Err(Error::InvalidArgument(format!(
                "element list length {} is not a positive multiple of {}",
                elements.len(),
                D + 1
            )));
        }
        if let Some(&bad) = elements.iter().find(|&&v| v >= vertices.len()) {
            return Err(Error::InvalidArgument(format!(
                "vertex index {bad} out of range ({} vertices)",
                vertices.len()
            )));
        }
        let boundary = vertices.iter().map(classify).collect();
        let topology = Topology::build(D, vertices.len(), elements, boundary);
        let mesh = SimplicialMesh {
            topology: Arc::new(topology),
            vertices,
        };
        mesh.check_orientation()?;
        Ok(mesh)
    }

    pub fn dim(&self) -> usize {
        D
    }

    pub fn topology(&self) -> &Arc<Topology> {
        &self.topology
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_elements(&self) -> usize {
        self.topology.n_elements()
    }

    pub fn vertices(&self) -> &[Point<D>] {
        &self.vertices
    }

    pub fn vertex(&self, i: usize) -> &Point<D> {
        &self.vertices[i]
    }

    pub fn element(&self, k: usize) -> &[usize] {
        self.topology.element(k)
    }

    pub fn patch(&self, i: usize) -> &[(usize, usize)] {
        self.topology.patch(i)
    }

    pub fn boundary_class(&self, i: usize) -> BoundaryClass {
        self.topology.boundary_class(i)
    }

    /// Same topology, new vertex positions. Orientation is not checked.
    pub fn with_vertices(&self, vertices: Vec<Point<D>>) -> Self {
        assert_eq!(vertices.len(), self.vertices.len(), "vertex count mismatch");
        SimplicialMesh {
            topology: Arc::clone(&self.topology),
            vertices,
        }
    }

    pub fn shares_connectivity(&self, other: &SimplicialMesh<D>) -> bool {
        Arc::ptr_eq(&self.topology, &other.topology)
            || (self.vertices.len() == other.vertices.len()
                && self.topology.elements == other.topology.elements)
    }

    /// Columns `x_j - x_0`, `j = 1..D`.
    pub fn edge_matrix(&self, k: usize) -> Mat<D> {
        let el = self.element(k);
        let x0 = &self.vertices[el[0]];
        let mut e = Mat::<D>::zeros();
        for j in 0..D {
            e.set_column(j, &(self.vertices[el[j + 1]] - x0));
        }
        e
    }

    pub fn element_volume(&self, k: usize) -> f64 {
        linalg::det(&self.edge_matrix(k)) / factorial(D)
    }

    pub fn total_volume(&self) -> f64 {
        (0..self.n_elements()).map(|k| self.element_volume(k)).sum()
    }

    pub fn centroid(&self, k: usize) -> Point<D> {
        let sum = self
            .element(k)
            .iter()
            .fold(Point::<D>::zeros(), |acc, &v| acc + self.vertices[v]);
        sum / (D + 1) as f64
    }

    /// First element with `det(E_K) <= 0`, if any.
    pub fn first_inverted(&self) -> Option<(usize, f64)> {
        (0..self.n_elements())
            .map(|k| (k, linalg::det(&self.edge_matrix(k))))
            .find(|&(_, d)| !(d > 0.0))
    }

    pub fn check_orientation(&self) -> Result<()> {
        match self.first_inverted() {
            Some((element, det)) => Err(Error::InvalidMesh { element, det }),
            None => Ok(()),
        }
    }

    /// Largest vertex displacement between two meshes with the same vertex count.
    pub fn max_distance(&self, other: &SimplicialMesh<D>) -> f64 {
        self.vertices
            .iter()
            .zip(&other.vertices)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

pub(crate) fn factorial(d: usize) -> f64 {
    (1..=d).product::<usize>() as f64
}

/// Physical and computational edge matrices of one element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeMatrixPair<const D: usize> {
    pub physical: Mat<D>,
    pub computational: Mat<D>,
}

impl<const D: usize> EdgeMatrixPair<D> {
    /// `J_K = E_Kc E_K^{-1}`.
    pub fn jacobian(&self) -> Option<Mat<D>> {
        linalg::inverse(&self.physical).map(|inv| self.computational * inv)
    }

    /// `det(J_K) = det(E_Kc) / det(E_K)`.
    pub fn det_jacobian(&self) -> f64 {
        linalg::det(&self.computational) / linalg::det(&self.physical)
    }
}

pub fn edge_matrices<const D: usize>(
    physical: &SimplicialMesh<D>,
    computational: &SimplicialMesh<D>,
    k: usize,
) -> Result<EdgeMatrixPair<D>> {
    if !physical.shares_connectivity(computational) {
        return Err(Error::ContractViolation(
            "physical and computational meshes have different connectivity".into(),
        ));
    }
    if k >= physical.n_elements() {
        return Err(Error::InvalidArgument(format!("element {k} out of range")));
    }
    Ok(EdgeMatrixPair {
        physical: physical.edge_matrix(k),
        computational: computational.edge_matrix(k),
    })
}
