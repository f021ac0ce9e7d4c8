//! Degree-4 symmetric quadrature on simplices and the L2 interpolation error.

use rayon::prelude::*;

use crate::linalg::Point;
use crate::mesh::SimplicialMesh;

/// A rule on the reference simplex: barycentric points and weights summing to 1.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 4]>,
    pub weights: Vec<f64>,
}

fn permutations(base: [f64; 4], len: usize) -> Vec<[f64; 4]> {
    let mut out: Vec<[f64; 4]> = Vec::new();
    let mut idx: Vec<usize> = (0..len).collect();
    // Heap's algorithm over the first `len` slots, keeping distinct tuples
    fn heap(k: usize, idx: &mut Vec<usize>, base: &[f64; 4], out: &mut Vec<[f64; 4]>) {
        if k == 1 {
            let mut p = [0.0; 4];
            for (slot, &i) in idx.iter().enumerate() {
                p[slot] = base[i];
            }
            if !out.contains(&p) {
                out.push(p);
            }
            return;
        }
        for i in 0..k {
            heap(k - 1, idx, base, out);
            let j = if k % 2 == 0 { i } else { 0 };
            idx.swap(j, k - 1);
        }
    }
    heap(len, &mut idx, &base, &mut out);
    out
}

/// Six-point triangle rule exact for degree 4.
pub fn triangle_rule() -> QuadratureRule {
    let groups = [
        (0.223381589678011, 0.445948490915965),
        (0.109951743655322, 0.091576213509771),
    ];
    let mut rule = QuadratureRule {
        points: Vec::new(),
        weights: Vec::new(),
    };
    for (w, a) in groups {
        for p in permutations([1.0 - 2.0 * a, a, a, 0.0], 3) {
            rule.points.push(p);
            rule.weights.push(w);
        }
    }
    rule
}

/// Eleven-point tetrahedron rule exact for degree 4.
pub fn tetrahedron_rule() -> QuadratureRule {
    let mut rule = QuadratureRule {
        points: vec![[0.25; 4]],
        weights: vec![-74.0 / 5625.0 * 6.0],
    };
    let (a, b) = (1.0 / 14.0, 11.0 / 14.0);
    for p in permutations([a, a, a, b], 4) {
        rule.points.push(p);
        rule.weights.push(343.0 / 45000.0 * 6.0);
    }
    let s = (5.0f64 / 14.0).sqrt();
    let (c, d) = ((1.0 + s) / 4.0, (1.0 - s) / 4.0);
    for p in permutations([c, c, d, d], 4) {
        rule.points.push(p);
        rule.weights.push(56.0 / 2250.0 * 6.0);
    }
    rule
}

pub fn rule_for_dim(d: usize) -> QuadratureRule {
    match d {
        2 => triangle_rule(),
        3 => tetrahedron_rule(),
        _ => panic!("no quadrature rule for dimension {d}"),
    }
}

/// `‖u − Π_h u‖_L2` with `Π_h` the vertex interpolant.
pub fn l2_interp_error<const D: usize, F>(mesh: &SimplicialMesh<D>, u: F) -> f64
where
    F: Fn(&Point<D>) -> f64 + Sync,
{
    let rule = rule_for_dim(D);
    let nodal: Vec<f64> = mesh.vertices().iter().map(&u).collect();
    let terms: Vec<f64> = (0..mesh.n_elements())
        .into_par_iter()
        .map(|k| {
            let el = mesh.element(k);
            let mut sum = 0.0;
            for (lam, w) in rule.points.iter().zip(&rule.weights) {
                let mut x = Point::<D>::zeros();
                let mut interp = 0.0;
                for (j, &v) in el.iter().enumerate() {
                    x += mesh.vertex(v) * lam[j];
                    interp += nodal[v] * lam[j];
                }
                let e = u(&x) - interp;
                sum += w * e * e;
            }
            mesh.element_volume(k) * sum
        })
        .collect();
    terms.iter().sum::<f64>().sqrt()
}
