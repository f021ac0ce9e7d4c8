//! Equidistribution and alignment quality measures.
//!
//! For element `K` with `J_K = E_Kc E_K⁻¹`:
//!
//! ```text
//! Q_eq,K  = det(J_K)⁻¹ det(M_K)^(1/2) / (σ / |Ω_c|)
//! Q_ali,K = tr(J_K M_K⁻¹ J_Kᵀ) / (d · det(J_K M_K⁻¹ J_Kᵀ)^(1/d))
//! ```
//!
//! Both equal 1 on a mesh that is uniform in the metric. The global values
//! are plain root-mean-square averages over elements.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::mesh::{EdgeMatrixPair, SimplicialMesh};
use crate::metric::MetricField;

/// `(Q_eq,K, Q_ali,K)` for one element.
pub fn quality_element<const D: usize>(
    pair: &EdgeMatrixPair<D>,
    m_k: &Mat<D>,
    sigma: f64,
    omega_c_volume: f64,
) -> (f64, f64) {
    let j = pair.jacobian().expect("physical element must be non-degenerate");
    let det_j = pair.det_jacobian();
    let m_inv = linalg::inverse(m_k).expect("metric must be SPD");
    let eq = linalg::det(m_k).sqrt() / det_j / (sigma / omega_c_volume);
    let a = j * m_inv * j.transpose();
    let ali = a.trace() / (D as f64 * linalg::det(&a).powf(1.0 / D as f64));
    (eq, ali)
}

/// Root mean square.
pub fn rms(values: &[f64]) -> f64 {
    (values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt()
}

/// Global `(Q_eq, Q_ali)` from per-element values.
pub fn quality_global(eq: &[f64], ali: &[f64]) -> (f64, f64) {
    (rms(eq), rms(ali))
}

/// `Σ w_K v_K / Σ w_K`.
pub fn volume_weighted_mean(values: &[f64], weights: &[f64]) -> f64 {
    let total: f64 = weights.iter().sum();
    values.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / total
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeshQuality {
    pub per_element_eq: Vec<f64>,
    pub per_element_ali: Vec<f64>,
    pub q_eq: f64,
    pub q_ali: f64,
}

/// Element and global quality of the map from `computational` to `physical` in `metric`.
pub fn mesh_quality<const D: usize>(
    physical: &SimplicialMesh<D>,
    computational: &SimplicialMesh<D>,
    metric: &MetricField<D>,
) -> Result<MeshQuality> {
    if !physical.shares_connectivity(computational) {
        return Err(Error::ContractViolation(
            "physical and computational meshes have different connectivity".into(),
        ));
    }
    physical.check_orientation()?;
    computational.check_orientation()?;
    let omega_c = computational.total_volume();
    let (eq, ali): (Vec<f64>, Vec<f64>) = (0..physical.n_elements())
        .into_par_iter()
        .map(|k| {
            let pair = EdgeMatrixPair {
                physical: physical.edge_matrix(k),
                computational: computational.edge_matrix(k),
            };
            quality_element(&pair, &metric.element_metric(physical, k), metric.sigma(), omega_c)
        })
        .unzip();
    let (q_eq, q_ali) = quality_global(&eq, &ali);
    Ok(MeshQuality {
        per_element_eq: eq,
        per_element_ali: ali,
        q_eq,
        q_ali,
    })
}

/// Summary of one adapted (or uniform) mesh.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QualityReport {
    #[serde(rename = "N")]
    pub n_elements: usize,
    #[serde(rename = "N_v")]
    pub n_vertices: usize,
    pub q_eq: f64,
    pub q_ali: f64,
    #[serde(skip)]
    pub per_element_eq: Vec<f64>,
    #[serde(skip)]
    pub per_element_ali: Vec<f64>,
    pub l2_error: f64,
    pub wall_time: f64,
}

impl QualityReport {
    pub fn new<const D: usize>(mesh: &SimplicialMesh<D>, quality: MeshQuality, l2_error: f64, wall_time: f64) -> Self {
        QualityReport {
            n_elements: mesh.n_elements(),
            n_vertices: mesh.n_vertices(),
            q_eq: quality.q_eq,
            q_ali: quality.q_ali,
            per_element_eq: quality.per_element_eq,
            per_element_ali: quality.per_element_ali,
            l2_error,
            wall_time,
        }
    }
}
