use log::warn;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::mesh::SimplicialMesh;

/// Singular-value ratio below which a local fit counts as rank deficient.
const RANK_TOLERANCE: f64 = 1e-10;

/// Quadratic coefficients smaller than this fraction of the local data
/// variation are round-off from fitting (near-)linear data and are zeroed.
const NOISE_FLOOR: f64 = 1e-10;

/// Per-vertex recovered Hessians.
#[derive(Debug, Clone)]
pub struct HessianField<const D: usize> {
    tensors: Vec<Mat<D>>,
    fallback_vertices: Vec<usize>,
}

impl<const D: usize> HessianField<D> {
    pub fn from_tensors(tensors: Vec<Mat<D>>) -> Self {
        HessianField {
            tensors: tensors.iter().map(crate::linalg::symmetrize).collect(),
            fallback_vertices: Vec::new(),
        }
    }

    pub fn tensors(&self) -> &[Mat<D>] {
        &self.tensors
    }

    pub fn vertex(&self, i: usize) -> &Mat<D> {
        &self.tensors[i]
    }

    /// Vertices where every fit was rank deficient and `H = 0` was used.
    pub fn fallback_vertices(&self) -> &[usize] {
        &self.fallback_vertices
    }
}

const fn n_coefficients(d: usize) -> usize {
    (d + 1) * (d + 2) / 2
}

/// Hessian recovery by local least-squares quadratic fits to nodal values.
///
/// Around each vertex the stencil grows ring by ring until it holds at least
/// twice as many vertices as the quadratic has coefficients. The second
/// derivatives of the fitted polynomial give the Hessian at the vertex.
pub fn recover_hessian<const D: usize>(mesh: &SimplicialMesh<D>, u: &[f64]) -> Result<HessianField<D>> {
    if u.len() != mesh.n_vertices() {
        return Err(Error::InvalidArgument(format!(
            "{} nodal values for {} vertices",
            u.len(),
            mesh.n_vertices()
        )));
    }
    if let Some(i) = u.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("nodal value at vertex {i} is not finite")));
    }

    let fits: Vec<Option<Mat<D>>> = (0..mesh.n_vertices())
        .into_par_iter()
        .map(|i| {
            let mut stencil = Stencil::new(mesh, i);
            while stencil.len() < 2 * n_coefficients(D) && stencil.grow() {}
            if let Some(h) = fit(mesh, u, i, stencil.vertices()) {
                return Some(h);
            }
            if stencil.grow() {
                fit(mesh, u, i, stencil.vertices())
            } else {
                None
            }
        })
        .collect();

    let mut fallback_vertices = Vec::new();
    let tensors = fits
        .into_iter()
        .enumerate()
        .map(|(i, h)| {
            h.unwrap_or_else(|| {
                fallback_vertices.push(i);
                Mat::<D>::zeros()
            })
        })
        .collect();
    if !fallback_vertices.is_empty() {
        warn!(
            "Hessian fit rank deficient at {} vertices, using H = 0 there",
            fallback_vertices.len()
        );
    }
    Ok(HessianField {
        tensors,
        fallback_vertices,
    })
}

/// Vertex rings around a centre vertex, grown breadth first.
struct Stencil<'a, const D: usize> {
    mesh: &'a SimplicialMesh<D>,
    members: Vec<usize>,
    frontier: Vec<usize>,
}

impl<'a, const D: usize> Stencil<'a, D> {
    fn new(mesh: &'a SimplicialMesh<D>, centre: usize) -> Self {
        let mut s = Stencil {
            mesh,
            members: vec![centre],
            frontier: vec![centre],
        };
        s.grow();
        s
    }

    fn len(&self) -> usize {
        self.members.len()
    }

    fn vertices(&self) -> &[usize] {
        &self.members
    }

    /// Add the next ring. Returns false when nothing new was reached.
    fn grow(&mut self) -> bool {
        let topo = self.mesh.topology();
        let mut next = Vec::new();
        for &v in &self.frontier {
            for w in topo.vertex_neighbors(v) {
                if !self.members.contains(&w) && !next.contains(&w) {
                    next.push(w);
                }
            }
        }
        next.sort_unstable();
        let grew = !next.is_empty();
        self.members.extend_from_slice(&next);
        self.frontier = next;
        grew
    }
}

fn fit<const D: usize>(mesh: &SimplicialMesh<D>, u: &[f64], centre: usize, stencil: &[usize]) -> Option<Mat<D>> {
    let ncoef = n_coefficients(D);
    if stencil.len() < ncoef {
        return None;
    }
    let xc = mesh.vertex(centre);
    let scale = stencil
        .iter()
        .map(|&j| (mesh.vertex(j) - xc).norm())
        .fold(0.0, f64::max);
    let data_scale = stencil.iter().map(|&j| (u[j] - u[centre]).abs()).fold(0.0, f64::max);
    if data_scale == 0.0 {
        return Some(Mat::<D>::zeros());
    }

    // columns: 1, d_a, d_a²/2, d_a d_b (a < b), in coordinates scaled to the stencil size
    let mut a = DMatrix::<f64>::zeros(stencil.len(), ncoef);
    let mut b = DVector::<f64>::zeros(stencil.len());
    for (r, &j) in stencil.iter().enumerate() {
        let d = (mesh.vertex(j) - xc) / scale;
        a[(r, 0)] = 1.0;
        let mut c = 1;
        for p in 0..D {
            a[(r, c)] = d[p];
            c += 1;
        }
        for p in 0..D {
            a[(r, c)] = 0.5 * d[p] * d[p];
            c += 1;
        }
        for p in 0..D {
            for q in p + 1..D {
                a[(r, c)] = d[p] * d[q];
                c += 1;
            }
        }
        b[r] = u[j] - u[centre];
    }

    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > RANK_TOLERANCE * smax) {
        return None;
    }
    let coef = svd.solve(&b, 0.0).ok()?;

    let snap = |c: f64| if c.abs() <= NOISE_FLOOR * data_scale { 0.0 } else { c };
    let inv_s2 = 1.0 / (scale * scale);
    let mut h = Mat::<D>::zeros();
    let mut c = 1 + D;
    for p in 0..D {
        h[(p, p)] = snap(coef[c]) * inv_s2;
        c += 1;
    }
    for p in 0..D {
        for q in p + 1..D {
            let v = snap(coef[c]) * inv_s2;
            h[(p, q)] = v;
            h[(q, p)] = v;
            c += 1;
        }
    }
    Some(h)
}
