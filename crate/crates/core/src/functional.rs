//! Meshing functionals `I[ξ] = ∫ G(J, det J, M) dx` and their derivatives.
//!
//! Three choices of `G` are provided:
//!
//! * **Winslow** (variable diffusion with a tensor coefficient):
//!   `G = ½ tr(J M⁻¹ Jᵀ)`.
//! * **Huang** (equidistribution and alignment):
//!   `G = θ √det M · tr(J M⁻¹ Jᵀ)^(dp/2) + (1 − 2θ) d^(dp/2) √det M · (det J / √det M)^p`.
//! * **Huang–Russell**, a four-term variant whose last term
//!   `θ₄/σ^(p+ν) · √det M · (det J / √det M)^(−ν)` is a barrier against
//!   `det J → 0`.
//!
//! `G` is treated as a function of `J` and `det J` as independent arguments.
//! `∂G/∂J` is returned in the transposed layout used by the mesh equation:
//! entry `(a, b)` is `∂G/∂J_(b,a)`, so that `dG = tr(∂G/∂J · dJ)`.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::metric::MetricField;
use crate::mesh::SimplicialMesh;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FunctionalKind {
    Winslow,
    Huang,
    #[serde(rename = "hr")]
    HuangRussell,
}

impl FunctionalKind {
    pub const ALL: [FunctionalKind; 3] = [
        FunctionalKind::Winslow,
        FunctionalKind::Huang,
        FunctionalKind::HuangRussell,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FunctionalKind::Winslow => "winslow",
            FunctionalKind::Huang => "huang",
            FunctionalKind::HuangRussell => "hr",
        }
    }
}

impl std::str::FromStr for FunctionalKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "winslow" | "w" => Ok(FunctionalKind::Winslow),
            "huang" | "h" => Ok(FunctionalKind::Huang),
            "hr" | "huang-russell" => Ok(FunctionalKind::HuangRussell),
            other => Err(format!("unknown functional '{other}' (expected winslow, huang or hr)")),
        }
    }
}

impl std::fmt::Display for FunctionalKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A functional together with its parameters.
///
/// `p` is shared by Huang and Huang–Russell, `theta` is Huang's weight,
/// `nu` and `thetas` belong to Huang–Russell. Winslow has no parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctionalSpec {
    pub kind: FunctionalKind,
    pub p: f64,
    pub theta: f64,
    pub nu: f64,
    pub thetas: [f64; 4],
}

impl FunctionalSpec {
    pub fn new(kind: FunctionalKind) -> Self {
        FunctionalSpec {
            kind,
            p: 2.0,
            theta: 1.0 / 3.0,
            nu: 1.0,
            thetas: [1.0 / 3.0, 1.0 / 3.0, 1.0, 0.1],
        }
    }

    pub fn winslow() -> Self {
        Self::new(FunctionalKind::Winslow)
    }

    pub fn huang() -> Self {
        Self::new(FunctionalKind::Huang)
    }

    pub fn huang_russell() -> Self {
        Self::new(FunctionalKind::HuangRussell)
    }

    /// Only Huang–Russell depends on `σ`.
    pub fn needs_sigma(&self) -> bool {
        self.kind == FunctionalKind::HuangRussell
    }

    /// Parameter ranges outside which coercivity/polyconvexity is not known.
    /// The values are still usable; callers decide whether to warn.
    pub fn range_warnings(&self, d: usize) -> Vec<String> {
        let mut out = Vec::new();
        match self.kind {
            FunctionalKind::Winslow => {}
            FunctionalKind::Huang => {
                if !(self.theta > 0.0 && self.theta <= 0.5) {
                    out.push(format!("theta = {} outside (0, 1/2]", self.theta));
                }
                if self.p < 1.0 {
                    out.push(format!("p = {} < 1", self.p));
                }
                if (d as f64) * self.p < 2.0 {
                    out.push(format!("d*p = {} < 2", d as f64 * self.p));
                }
            }
            FunctionalKind::HuangRussell => {
                let [t1, t2, t3, t4] = self.thetas;
                if !(t3 - t1 - t2 > 0.0) {
                    out.push(format!("theta3 - theta1 - theta2 = {} <= 0", t3 - t1 - t2));
                }
                if self.thetas.iter().any(|&t| !(t > 0.0)) || t4 <= 0.0 {
                    out.push(format!("thetas {:?} must all be positive", self.thetas));
                }
                if !(self.p > 1.0) {
                    out.push(format!("p = {} <= 1", self.p));
                }
                if !(self.nu > 0.0) {
                    out.push(format!("nu = {} <= 0", self.nu));
                }
            }
        }
        out
    }

    pub(crate) fn warn_if_out_of_range(&self, d: usize) {
        for w in self.range_warnings(d) {
            warn!("{} functional: {w}", self.kind);
        }
    }

    /// Evaluate `G` and its derivatives with `det J` as an independent argument.
    ///
    /// No consistency check between `j` and `det_j` is made; that lets the
    /// derivative with respect to each be checked separately.
    pub fn evaluate<const D: usize>(
        &self,
        j: &Mat<D>,
        det_j: f64,
        metric: &ElementMetric<D>,
        sigma: f64,
    ) -> Result<GDerivatives<D>> {
        match self.kind {
            FunctionalKind::Winslow => Ok(winslow(j, metric)),
            FunctionalKind::Huang => huang(self, j, det_j, metric),
            FunctionalKind::HuangRussell => huang_russell(self, j, det_j, metric, sigma),
        }
    }
}

/// `G`, `∂G/∂J` (transposed layout) and `∂G/∂det J` at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GDerivatives<const D: usize> {
    pub g: f64,
    pub dg_dj: Mat<D>,
    pub dg_ddet: f64,
}

/// A metric tensor with its inverse and determinant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementMetric<const D: usize> {
    pub m: Mat<D>,
    pub m_inv: Mat<D>,
    pub det: f64,
}

impl<const D: usize> ElementMetric<D> {
    pub fn new(m: &Mat<D>) -> Result<Self> {
        let det = linalg::det(m);
        if !(det > 0.0) || !linalg::is_spd(m) {
            return Err(Error::ContractViolation(format!("metric tensor is not SPD: {m}")));
        }
        Ok(ElementMetric {
            m: *m,
            m_inv: linalg::inverse_with_det(m, det),
            det,
        })
    }
}

/// `x^e`, using `powi` and `sqrt` for integer and half-integer exponents.
#[inline]
fn pw(x: f64, e: f64) -> f64 {
    if e == e.trunc() && e.abs() <= 64.0 {
        x.powi(e as i32)
    } else if 2.0 * e == (2.0 * e).trunc() && e.abs() <= 64.0 {
        x.powi(e.floor() as i32) * x.sqrt()
    } else {
        x.powf(e)
    }
}

fn winslow<const D: usize>(j: &Mat<D>, metric: &ElementMetric<D>) -> GDerivatives<D> {
    let mj = metric.m_inv * j.transpose();
    GDerivatives {
        g: 0.5 * (j * mj).trace(),
        dg_dj: mj,
        dg_ddet: 0.0,
    }
}

fn huang<const D: usize>(
    spec: &FunctionalSpec,
    j: &Mat<D>,
    det_j: f64,
    metric: &ElementMetric<D>,
) -> Result<GDerivatives<D>> {
    let (d, p, theta) = (D as f64, spec.p, spec.theta);
    if det_j <= 0.0 && p.fract() != 0.0 {
        return Err(Error::Domain(format!("det(J) = {det_j:e} with non-integer p = {p}")));
    }
    let sdm = metric.det.sqrt();
    let mj = metric.m_inv * j.transpose();
    let tr = (j * mj).trace();
    let a = d * p / 2.0;
    let da = pw(d, a);
    let tr_a1 = pw(tr, a - 1.0);
    Ok(GDerivatives {
        g: theta * sdm * tr_a1 * tr + (1.0 - 2.0 * theta) * da * sdm * pw(det_j / sdm, p),
        dg_dj: mj * (d * p * theta * sdm * tr_a1),
        dg_ddet: p * (1.0 - 2.0 * theta) * da * pw(metric.det, 0.5 * (1.0 - p)) * pw(det_j, p - 1.0),
    })
}

fn huang_russell<const D: usize>(
    spec: &FunctionalSpec,
    j: &Mat<D>,
    det_j: f64,
    metric: &ElementMetric<D>,
    sigma: f64,
) -> Result<GDerivatives<D>> {
    if !(det_j > 0.0) {
        return Err(Error::Barrier { det_j, element: None });
    }
    if !(sigma > 0.0) {
        return Err(Error::ContractViolation(format!("sigma = {sigma} must be positive")));
    }
    let j_inv = linalg::inverse(j).ok_or(Error::Barrier { det_j, element: None })?;
    let (d, p, nu) = (D as f64, spec.p, spec.nu);
    let [t1, t2, t3, t4] = spec.thetas;

    let sdm = metric.det.sqrt();
    let mj = metric.m_inv * j.transpose();
    let tr1 = (j * mj).trace();
    // J⁻ᵀ M J⁻¹ and its trace
    let jmj = j_inv.transpose() * metric.m * j_inv;
    let tr2 = jmj.trace();

    let a = d * p / 2.0;
    let da = pw(d, a);
    let b = d * p / (d - 1.0);
    let q2 = b / 2.0;
    let c2 = pw(d, d * p * (d - 2.0) / (2.0 * (d - 1.0)));
    let m2 = pw(metric.det, 0.5 * (1.0 - b));
    let w3 = t3 - t1 - t2;
    let s4 = t4 / pw(sigma, p + nu);

    let tr1_a1 = pw(tr1, a - 1.0);
    let tr2_q1 = pw(tr2, q2 - 1.0);
    let det_b1 = pw(det_j, b - 1.0);
    let term2 = t2 * c2 * m2 * det_b1 * det_j * tr2_q1 * tr2;
    let g = t1 * sdm * tr1_a1 * tr1
        + term2
        + w3 * da * pw(sdm, 1.0 - p) * pw(det_j, p)
        + s4 * pw(sdm, 1.0 + nu) * pw(det_j, -nu);

    let dg_dj = mj * (t1 * d * p * sdm * tr1_a1)
        - (j_inv * jmj) * (t2 * b * c2 * m2 * det_b1 * det_j * tr2_q1);
    let dg_ddet = t2 * b * c2 * m2 * det_b1 * tr2_q1 * tr2
        + w3 * p * da * pw(sdm, 1.0 - p) * pw(det_j, p - 1.0)
        - s4 * nu * pw(sdm, 1.0 + nu) * pw(det_j, -nu - 1.0);

    Ok(GDerivatives { g, dg_dj, dg_ddet })
}

fn check_det_consistency<const D: usize>(j: &Mat<D>, det_j: f64) -> Result<()> {
    let actual = linalg::det(j);
    if (actual - det_j).abs() > 1e-10 * actual.abs().max(det_j.abs()) {
        return Err(Error::ContractViolation(format!(
            "det_j = {det_j:e} does not match det(J) = {actual:e}"
        )));
    }
    Ok(())
}

pub fn eval_winslow<const D: usize>(j: &Mat<D>, det_j: f64, m: &Mat<D>) -> Result<GDerivatives<D>> {
    check_det_consistency(j, det_j)?;
    Ok(winslow(j, &ElementMetric::new(m)?))
}

pub fn eval_huang<const D: usize>(
    j: &Mat<D>,
    det_j: f64,
    m: &Mat<D>,
    spec: &FunctionalSpec,
) -> Result<GDerivatives<D>> {
    if spec.kind != FunctionalKind::Huang {
        return Err(Error::InvalidArgument(format!("expected a Huang spec, got {}", spec.kind)));
    }
    check_det_consistency(j, det_j)?;
    huang(spec, j, det_j, &ElementMetric::new(m)?)
}

pub fn eval_hr<const D: usize>(
    j: &Mat<D>,
    det_j: f64,
    m: &Mat<D>,
    spec: &FunctionalSpec,
    sigma: f64,
) -> Result<GDerivatives<D>> {
    if spec.kind != FunctionalKind::HuangRussell {
        return Err(Error::InvalidArgument(format!(
            "expected a Huang-Russell spec, got {}",
            spec.kind
        )));
    }
    check_det_consistency(j, det_j)?;
    huang_russell(spec, j, det_j, &ElementMetric::new(m)?, sigma)
}

/// Balancing function: `det(M)^(1/d)` for Winslow, `det(M)^((p-1)/2)` otherwise.
pub fn balancing_p<const D: usize>(spec: &FunctionalSpec, m: &Mat<D>) -> f64 {
    balancing_from_det(spec, linalg::det(m), D)
}

pub(crate) fn balancing_from_det(spec: &FunctionalSpec, det_m: f64, d: usize) -> f64 {
    match spec.kind {
        FunctionalKind::Winslow => det_m.powf(1.0 / d as f64),
        _ => det_m.powf(0.5 * (spec.p - 1.0)),
    }
}

/// Discrete functional `I_h = Σ_K |K| G(J_K, det J_K, M_K)` with
/// `J_K = E_Kc E_K⁻¹` and `M_K` the vertex average of the metric.
pub fn discrete_energy<const D: usize>(
    physical: &SimplicialMesh<D>,
    computational: &SimplicialMesh<D>,
    metric: &MetricField<D>,
    spec: &FunctionalSpec,
) -> Result<f64> {
    if !physical.shares_connectivity(computational) {
        return Err(Error::ContractViolation(
            "physical and computational meshes have different connectivity".into(),
        ));
    }
    let mut total = 0.0;
    for k in 0..physical.n_elements() {
        let e = physical.edge_matrix(k);
        let ec = computational.edge_matrix(k);
        let det_e = linalg::det(&e);
        let e_inv = linalg::inverse(&e).ok_or(Error::InvalidMesh { element: k, det: det_e })?;
        let j = ec * e_inv;
        let det_j = linalg::det(&ec) / det_e;
        let em = ElementMetric::new(&metric.element_metric(physical, k))?;
        let gd = spec
            .evaluate(&j, det_j, &em, metric.sigma())
            .map_err(|e| e.with_element(k))?;
        total += det_e / crate::mesh::factorial(D) * gd.g;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id2() -> Mat<2> {
        Mat::<2>::identity()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * b.abs().max(1.0)
    }

    #[test]
    fn winslow_closed_forms() {
        let r = eval_winslow(&id2(), 1.0, &id2()).unwrap();
        assert_eq!((r.g, r.dg_dj, r.dg_ddet), (1.0, id2(), 0.0));

        let j = Mat::<2>::new(2.0, 0.0, 0.0, 1.0);
        let r = eval_winslow(&j, 2.0, &id2()).unwrap();
        assert!(close(r.g, 2.5));
        assert_eq!(r.dg_dj, j);

        let r = eval_winslow(&id2(), 1.0, &(id2() * 4.0)).unwrap();
        assert!(close(r.g, 0.25));
        assert!((r.dg_dj - id2() * 0.25).norm() < 1e-15);
    }

    #[test]
    fn huang_at_identity() {
        let r = eval_huang(&id2(), 1.0, &id2(), &FunctionalSpec::huang()).unwrap();
        assert!(close(r.g, 8.0 / 3.0));
        assert!((r.dg_dj - id2() * (8.0 / 3.0)).norm() < 1e-12);
        assert!(close(r.dg_ddet, 8.0 / 3.0));
    }

    #[test]
    fn huang_harmonic_limit() {
        let spec = FunctionalSpec {
            theta: 0.5,
            p: 1.0,
            ..FunctionalSpec::huang()
        };
        let r = eval_huang(&id2(), 1.0, &id2(), &spec).unwrap();
        assert!(close(r.g, 1.0));
    }

    #[test]
    fn hr_at_identity() {
        let r = eval_hr(&id2(), 1.0, &id2(), &FunctionalSpec::huang_russell(), 1.0).unwrap();
        assert!(close(r.g, 4.1));
        assert!(r.dg_dj.norm() < 1e-12);
        assert!(close(r.dg_ddet, 7.9));
    }

    #[test]
    fn hr_barrier() {
        let spec = FunctionalSpec::huang_russell();
        let em = ElementMetric::new(&id2()).unwrap();
        let mut last = 0.0;
        for eps in [1e-2, 1e-4, 1e-6, 1e-8] {
            let j = Mat::<2>::new(1.0, 0.0, 0.0, eps);
            let g = spec.evaluate(&j, eps, &em, 1.0).unwrap().g;
            assert!(g > last);
            last = g;
        }
        assert!(last > 1e6);
        let j = Mat::<2>::new(1.0, 0.0, 0.0, -0.5);
        assert!(matches!(eval_hr(&j, -0.5, &id2(), &spec, 1.0), Err(Error::Barrier { .. })));
    }

    #[test]
    fn huang_domain_error_for_fractional_p() {
        let spec = FunctionalSpec {
            p: 1.5,
            ..FunctionalSpec::huang()
        };
        let j = Mat::<2>::new(1.0, 0.0, 0.0, -1.0);
        assert!(matches!(eval_huang(&j, -1.0, &id2(), &spec), Err(Error::Domain(_))));
    }

    #[test]
    fn inconsistent_det_is_rejected() {
        assert!(matches!(
            eval_winslow(&id2(), 2.0, &id2()),
            Err(Error::ContractViolation(_))
        ));
    }

    #[test]
    fn singular_metric_is_rejected() {
        let m = Mat::<2>::new(1.0, 0.0, 0.0, 0.0);
        assert!(eval_winslow(&id2(), 1.0, &m).is_err());
    }

    #[test]
    fn balancing_values() {
        let m4 = id2() * 4.0;
        assert!(close(balancing_p(&FunctionalSpec::winslow(), &m4), 4.0));
        assert!(close(balancing_p(&FunctionalSpec::huang(), &m4), 4.0));
        assert!(close(balancing_p(&FunctionalSpec::winslow(), &id2()), 1.0));
    }

    #[test]
    fn range_warnings() {
        assert!(FunctionalSpec::huang().range_warnings(2).is_empty());
        assert!(FunctionalSpec::huang_russell().range_warnings(3).is_empty());
        let bad = FunctionalSpec {
            theta: 0.7,
            ..FunctionalSpec::huang()
        };
        assert_eq!(bad.range_warnings(2).len(), 1);
        let bad = FunctionalSpec {
            thetas: [0.5, 0.5, 1.0, 0.1],
            ..FunctionalSpec::huang_russell()
        };
        assert_eq!(bad.range_warnings(2).len(), 1);
    }
}
