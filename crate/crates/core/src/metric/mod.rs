//! Adaptation metric built from a recovered Hessian.
//!
//! For a Hessian field `H` the metric is
//!
//! ```text
//! M = det(αI + |H|)^(-1/(d+s)) (αI + |H|)
//! ```
//!
//! with `s = 4` for the L2 norm of the linear interpolation error and `s = 2`
//! for its H1 seminorm. The regularization `α` is fixed by
//! `∫ det(αI + |H|)^q = 2 ∫ det(|H|)^q`, where `det(M)^(1/2) = det(αI + |H|)^q`,
//! so `q = 2/(d+4)` for L2 and `q = 1/(d+2)` for H1; see [`build_metric`].

mod hessian;

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::{self, Mat};
use crate::mesh::SimplicialMesh;

pub use hessian::{recover_hessian, HessianField};
pub use linalg::abs_eig;

/// Guaranteed bound on the relative residual of the α constraint.
pub const ALPHA_TOLERANCE: f64 = 1e-8;
const MAX_BISECTIONS: usize = 200;

/// Error norm the metric is optimal for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    L2,
    H1,
}

impl MetricKind {
    /// Exponent of `det(αI + |H|)` in the metric.
    fn scaling_exponent(self, d: usize) -> f64 {
        match self {
            MetricKind::L2 => -1.0 / (d as f64 + 4.0),
            MetricKind::H1 => -1.0 / (d as f64 + 2.0),
        }
    }

    /// Exponent `q` with `det(M)^(1/2) = det(αI + |H|)^q`.
    pub fn density_exponent(self, d: usize) -> f64 {
        0.5 * (1.0 + d as f64 * self.scaling_exponent(d))
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::L2 => "l2",
            MetricKind::H1 => "h1",
        }
    }
}

impl std::str::FromStr for MetricKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "l2" => Ok(MetricKind::L2),
            "h1" => Ok(MetricKind::H1),
            other => Err(format!("unknown metric kind '{other}' (expected l2 or h1)")),
        }
    }
}

/// Vertex metric tensors together with `α` and the discrete `σ`.
#[derive(Debug, Clone)]
pub struct MetricField<const D: usize> {
    tensors: Vec<Mat<D>>,
    alpha: f64,
    sigma: f64,
}

impl<const D: usize> MetricField<D> {
    /// Wrap given vertex tensors; `σ` is computed on `mesh`.
    pub fn from_tensors(mesh: &SimplicialMesh<D>, tensors: Vec<Mat<D>>, alpha: f64) -> Self {
        assert_eq!(tensors.len(), mesh.n_vertices(), "one tensor per vertex");
        let tensors: Vec<Mat<D>> = tensors.iter().map(linalg::symmetrize).collect();
        let sigma = discrete_sigma(mesh, &tensors);
        MetricField { tensors, alpha, sigma }
    }

    pub fn identity(mesh: &SimplicialMesh<D>) -> Self {
        Self::from_tensors(mesh, vec![Mat::<D>::identity(); mesh.n_vertices()], 1.0)
    }

    pub fn tensors(&self) -> &[Mat<D>] {
        &self.tensors
    }

    pub fn vertex(&self, i: usize) -> &Mat<D> {
        &self.tensors[i]
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `σ = Σ_K |K| det(M_K)^(1/2)`.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// `c·M`, with `σ` recomputed on `mesh`. Used to check scale invariance.
    pub fn scaled(&self, mesh: &SimplicialMesh<D>, c: f64) -> Self {
        Self::from_tensors(mesh, self.tensors.iter().map(|m| m * c).collect(), self.alpha * c)
    }

    /// Arithmetic mean of the vertex tensors of element `k`.
    pub fn element_metric(&self, mesh: &SimplicialMesh<D>, k: usize) -> Mat<D> {
        element_average(mesh, &self.tensors, k)
    }

    /// Debug dump: `vertex,M11,M12,[M13,]M22,[M23,M33,]alpha,sigma`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let mut header = vec!["vertex".to_string()];
        for a in 0..D {
            for b in a..D {
                header.push(format!("M{}{}", a + 1, b + 1));
            }
        }
        header.extend(["alpha".to_string(), "sigma".to_string()]);
        writeln!(w, "{}", header.join(","))?;
        for (i, m) in self.tensors.iter().enumerate() {
            write!(w, "{i}")?;
            for a in 0..D {
                for b in a..D {
                    write!(w, ",{}", m[(a, b)])?;
                }
            }
            writeln!(w, ",{},{}", self.alpha, self.sigma)?;
        }
        Ok(())
    }
}

/// Arithmetic mean of the vertex tensors of element `k`; SPD when they are.
pub fn element_metric<const D: usize>(metric: &MetricField<D>, mesh: &SimplicialMesh<D>, k: usize) -> Mat<D> {
    metric.element_metric(mesh, k)
}

fn element_average<const D: usize>(mesh: &SimplicialMesh<D>, tensors: &[Mat<D>], k: usize) -> Mat<D> {
    let sum = mesh
        .element(k)
        .iter()
        .fold(Mat::<D>::zeros(), |acc, &v| acc + tensors[v]);
    sum / (D + 1) as f64
}

fn discrete_sigma<const D: usize>(mesh: &SimplicialMesh<D>, tensors: &[Mat<D>]) -> f64 {
    let terms: Vec<f64> = (0..mesh.n_elements())
        .into_par_iter()
        .map(|k| mesh.element_volume(k) * linalg::det(&element_average(mesh, tensors, k)).sqrt())
        .collect();
    terms.iter().sum()
}

/// Metric optimal for the L2 norm of the linear interpolation error.
pub fn build_metric_l2<const D: usize>(mesh: &SimplicialMesh<D>, hessian: &HessianField<D>) -> MetricField<D> {
    build_metric(mesh, hessian, MetricKind::L2)
}

/// Metric optimal for the H1 seminorm of the linear interpolation error.
pub fn build_metric_h1<const D: usize>(mesh: &SimplicialMesh<D>, hessian: &HessianField<D>) -> MetricField<D> {
    build_metric(mesh, hessian, MetricKind::H1)
}

/// Build the regularized optimal metric from a Hessian field.
///
/// `α` solves `Σ_K |K| det(αI + |H|_K)^q = 2 Σ_K |K| det(|H|_K)^q` by
/// bisection, where `|H|_K` is the vertex average over `K` and `q` is
/// [`MetricKind::density_exponent`]. When the right-hand side vanishes (no
/// curvature anywhere, or rank-deficient `|H|` everywhere) the metric falls
/// back to the identity with `α = 1`.
pub fn build_metric<const D: usize>(
    mesh: &SimplicialMesh<D>,
    hessian: &HessianField<D>,
    kind: MetricKind,
) -> MetricField<D> {
    let abs_h: Vec<Mat<D>> = hessian.tensors().par_iter().map(abs_eig).collect();
    let q = kind.density_exponent(D);

    let elements: Vec<(f64, Mat<D>)> = (0..mesh.n_elements())
        .into_par_iter()
        .map(|k| (mesh.element_volume(k), element_average(mesh, &abs_h, k)))
        .collect();
    let rhs = 2.0
        * elements
            .iter()
            .map(|(vol, h)| vol * linalg::det(h).max(0.0).powf(q))
            .sum::<f64>();
    if !(rhs > 0.0) || !rhs.is_finite() {
        return MetricField::identity(mesh);
    }

    let identity = Mat::<D>::identity();
    let residual = |alpha: f64| -> f64 {
        elements
            .iter()
            .map(|(vol, h)| vol * linalg::det(&(identity * alpha + h)).powf(q))
            .sum::<f64>()
            - rhs
    };

    // residual(0) = -rhs/2 < 0 and the residual grows monotonically in α
    let mut lo = 0.0;
    let mut hi = 1.0;
    while residual(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    // Bisect to the end of the bracket rather than stopping at
    // ALPHA_TOLERANCE: an early stop makes α jump between iterates when the
    // mesh changes by round-off, and the outer loop amplifies such jumps.
    let mut alpha = hi;
    for _ in 0..MAX_BISECTIONS {
        alpha = 0.5 * (lo + hi);
        if alpha <= lo || alpha >= hi {
            break;
        }
        let r = residual(alpha);
        if r == 0.0 {
            break;
        }
        if r < 0.0 {
            lo = alpha;
        } else {
            hi = alpha;
        }
    }

    let exponent = kind.scaling_exponent(D);
    let tensors = abs_h
        .par_iter()
        .map(|h| {
            let a = identity * alpha + h;
            a * linalg::det(&a).powf(exponent)
        })
        .collect();
    MetricField::from_tensors(mesh, tensors, alpha)
}

/// Relative residual of the α constraint for a finished metric; used by tests.
pub fn alpha_residual<const D: usize>(
    mesh: &SimplicialMesh<D>,
    hessian: &HessianField<D>,
    kind: MetricKind,
    alpha: f64,
) -> f64 {
    let abs_h: Vec<Mat<D>> = hessian.tensors().iter().map(abs_eig).collect();
    let q = kind.density_exponent(D);
    let (mut lhs, mut rhs) = (0.0, 0.0);
    for k in 0..mesh.n_elements() {
        let vol = mesh.element_volume(k);
        let h = element_average(mesh, &abs_h, k);
        lhs += vol * linalg::det(&(Mat::<D>::identity() * alpha + h)).powf(q);
        rhs += 2.0 * vol * linalg::det(&h).max(0.0).powf(q);
    }
    (lhs - rhs).abs() / rhs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_structured_mesh;

    fn constant_hessian<const D: usize>(mesh: &SimplicialMesh<D>, h: Mat<D>) -> HessianField<D> {
        HessianField::from_tensors(vec![h; mesh.n_vertices()])
    }

    #[test]
    fn density_exponents() {
        assert!((MetricKind::L2.density_exponent(2) - 1.0 / 3.0).abs() < 1e-15);
        assert!((MetricKind::L2.density_exponent(3) - 2.0 / 7.0).abs() < 1e-15);
        assert!((MetricKind::H1.density_exponent(2) - 0.25).abs() < 1e-15);
        assert!((MetricKind::H1.density_exponent(3) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn alpha_constraint_residual_is_small() {
        let m = build_structured_mesh::<2>(12).unwrap();
        let u: Vec<f64> = m.vertices().iter().map(|p| (8.0 * (p[0] + p[1] - 1.0)).tanh()).collect();
        let h = recover_hessian(&m, &u).unwrap();
        for kind in [MetricKind::L2, MetricKind::H1] {
            let metric = build_metric(&m, &h, kind);
            assert!(alpha_residual(&m, &h, kind, metric.alpha()) <= ALPHA_TOLERANCE);
        }
    }

    #[test]
    fn constant_identity_hessian_l2() {
        let m = build_structured_mesh::<2>(4).unwrap();
        let metric = build_metric_l2(&m, &constant_hessian(&m, Mat::<2>::identity()));
        // (α + 1)^(2/3) = 2
        let expect = 2.0f64.powf(1.5) - 1.0;
        assert!((metric.alpha() - expect).abs() < 1e-7 * expect);
    }

    #[test]
    fn constant_identity_hessian_h1() {
        let m = build_structured_mesh::<2>(4).unwrap();
        let metric = build_metric_h1(&m, &constant_hessian(&m, Mat::<2>::identity()));
        // (α + 1)^(1/2) = 2
        assert!((metric.alpha() - 3.0).abs() < 1e-7 * 3.0);
    }

    #[test]
    fn alpha_scales_with_hessian() {
        let m = build_structured_mesh::<2>(4).unwrap();
        let a1 = build_metric_l2(&m, &constant_hessian(&m, Mat::<2>::identity())).alpha();
        let a4 = build_metric_l2(&m, &constant_hessian(&m, Mat::<2>::identity() * 4.0)).alpha();
        assert!((a4 - 4.0 * a1).abs() < 1e-7 * a4);
    }

    #[test]
    fn zero_hessian_falls_back_to_identity() {
        let m = build_structured_mesh::<3>(2).unwrap();
        for kind in [MetricKind::L2, MetricKind::H1] {
            let metric = build_metric(&m, &constant_hessian(&m, Mat::<3>::zeros()), kind);
            assert_eq!(metric.alpha(), 1.0);
            assert!(metric.tensors().iter().all(|t| *t == Mat::<3>::identity()));
            assert!((metric.sigma() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn element_metric_is_vertex_mean() {
        let m = SimplicialMesh::<2>::new(
            vec![
                crate::linalg::Point::<2>::new(0.0, 0.0),
                crate::linalg::Point::<2>::new(1.0, 0.0),
                crate::linalg::Point::<2>::new(0.0, 1.0),
            ],
            vec![0, 1, 2],
        )
        .unwrap();
        let field = MetricField::from_tensors(
            &m,
            vec![
                Mat::<2>::from_diagonal_element(1.0),
                Mat::<2>::new(3.0, 0.0, 0.0, 1.0),
                Mat::<2>::new(2.0, 0.0, 0.0, 4.0),
            ],
            1.0,
        );
        assert_eq!(element_metric(&field, &m, 0), Mat::<2>::new(2.0, 0.0, 0.0, 2.0));
    }

    #[test]
    fn csv_dump_columns() {
        let m = build_structured_mesh::<3>(2).unwrap();
        let mut buf = Vec::new();
        MetricField::identity(&m).write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "vertex,M11,M12,M13,M22,M23,M33,alpha,sigma");
        assert!(lines.next().unwrap().starts_with("0,1,0,0,1,0,1,1,"));
    }
}
