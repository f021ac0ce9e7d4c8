//! Closed-form kernels for the 2×2 and 3×3 matrices that appear per element.
//!
//! nalgebra supplies the storage and arithmetic; determinants, inverses and
//! the symmetric eigen-decomposition are written out here so they work for a
//! generic `const D: usize` without trait-bound plumbing.

use nalgebra::{SMatrix, SVector};

pub type Mat<const D: usize> = SMatrix<f64, D, D>;
pub type Point<const D: usize> = SVector<f64, D>;

pub(crate) const fn assert_supported_dim<const D: usize>() {
    assert!(D == 2 || D == 3, "only 2D and 3D are supported");
}

pub fn det<const D: usize>(m: &Mat<D>) -> f64 {
    match D {
        2 => m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)],
        3 => {
            m[(0, 0)] * (m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)])
                - m[(0, 1)] * (m[(1, 0)] * m[(2, 2)] - m[(1, 2)] * m[(2, 0)])
                + m[(0, 2)] * (m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)])
        }
        _ => unreachable!("unsupported dimension {D}"),
    }
}

/// Inverse through the adjugate. `None` when the determinant is zero or not finite.
pub fn inverse<const D: usize>(m: &Mat<D>) -> Option<Mat<D>> {
    let d = det(m);
    if d == 0.0 || !d.is_finite() {
        return None;
    }
    Some(inverse_with_det(m, d))
}

pub(crate) fn inverse_with_det<const D: usize>(m: &Mat<D>, d: f64) -> Mat<D> {
    let mut inv = Mat::<D>::zeros();
    let r = 1.0 / d;
    match D {
        2 => {
            inv[(0, 0)] = m[(1, 1)] * r;
            inv[(0, 1)] = -m[(0, 1)] * r;
            inv[(1, 0)] = -m[(1, 0)] * r;
            inv[(1, 1)] = m[(0, 0)] * r;
        }
        3 => {
            inv[(0, 0)] = (m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)]) * r;
            inv[(0, 1)] = (m[(0, 2)] * m[(2, 1)] - m[(0, 1)] * m[(2, 2)]) * r;
            inv[(0, 2)] = (m[(0, 1)] * m[(1, 2)] - m[(0, 2)] * m[(1, 1)]) * r;
            inv[(1, 0)] = (m[(1, 2)] * m[(2, 0)] - m[(1, 0)] * m[(2, 2)]) * r;
            inv[(1, 1)] = (m[(0, 0)] * m[(2, 2)] - m[(0, 2)] * m[(2, 0)]) * r;
            inv[(1, 2)] = (m[(0, 2)] * m[(1, 0)] - m[(0, 0)] * m[(1, 2)]) * r;
            inv[(2, 0)] = (m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)]) * r;
            inv[(2, 1)] = (m[(0, 1)] * m[(2, 0)] - m[(0, 0)] * m[(2, 1)]) * r;
            inv[(2, 2)] = (m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]) * r;
        }
        _ => unreachable!("unsupported dimension {D}"),
    }
    inv
}

pub fn symmetrize<const D: usize>(m: &Mat<D>) -> Mat<D> {
    (m + m.transpose()) * 0.5
}

/// Symmetric eigen-decomposition by cyclic Jacobi rotations.
///
/// Returns the eigenvalues and a matrix whose columns are the matching
/// orthonormal eigenvectors. Only the symmetric part of `m` is used.
pub fn sym_eigen<const D: usize>(m: &Mat<D>) -> (Point<D>, Mat<D>) {
    let mut a = symmetrize(m);
    let mut v = Mat::<D>::identity();
    for _ in 0..64 {
        let mut off = 0.0;
        let mut diag = 0.0;
        for p in 0..D {
            diag += a[(p, p)] * a[(p, p)];
            for q in p + 1..D {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if off == 0.0 || off <= 1e-32 * diag {
            break;
        }
        for p in 0..D {
            for q in p + 1..D {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..D {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..D {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..D {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    (a.diagonal(), v)
}

/// Replace the eigenvalues of a symmetric matrix by their absolute values.
pub fn abs_eig<const D: usize>(h: &Mat<D>) -> Mat<D> {
    let (lambda, v) = sym_eigen(h);
    let abs = Mat::<D>::from_diagonal(&lambda.map(f64::abs));
    symmetrize(&(v * abs * v.transpose()))
}

/// Positive definiteness through the eigenvalues of the symmetric part.
pub fn is_spd<const D: usize>(m: &Mat<D>) -> bool {
    let (lambda, _) = sym_eigen(m);
    lambda.iter().all(|&l| l > 0.0 && l.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn det_and_inverse_3d() {
        let m = Mat::<3>::new(2.0, 1.0, 0.5, -1.0, 3.0, 0.25, 0.0, 1.0, 4.0);
        let inv = inverse(&m).unwrap();
        assert!((m * inv - Mat::<3>::identity()).norm() < 1e-14);
        // cofactor expansion along the last row as a second route
        let d = 0.0 * (1.0 * 0.25 - 0.5 * 3.0) - 1.0 * (2.0 * 0.25 - 0.5 * -1.0)
            + 4.0 * (2.0 * 3.0 - 1.0 * -1.0);
        assert!((det(&m) - d).abs() < 1e-14);
    }

    #[test]
    fn singular_has_no_inverse() {
        let m = Mat::<2>::new(1.0, 2.0, 2.0, 4.0);
        assert!(inverse(&m).is_none());
    }

    #[test]
    fn eigen_reconstructs() {
        let m = Mat::<3>::new(4.0, 1.0, -2.0, 1.0, 2.0, 0.5, -2.0, 0.5, -3.0);
        let (l, v) = sym_eigen(&m);
        let back = v * Mat::<3>::from_diagonal(&l) * v.transpose();
        assert!((back - m).norm() < 1e-13);
        assert!((v.transpose() * v - Mat::<3>::identity()).norm() < 1e-13);
    }

    #[test]
    fn abs_eig_diagonal() {
        let h = Mat::<2>::new(2.0, 0.0, 0.0, -3.0);
        assert!((abs_eig(&h) - Mat::<2>::new(2.0, 0.0, 0.0, 3.0)).norm() < 1e-15);
        assert_eq!(abs_eig(&Mat::<2>::zeros()), Mat::<2>::zeros());
    }
}
