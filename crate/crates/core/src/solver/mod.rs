//! The moving-mesh solver: nodal velocities, time integration of the mesh
//! equation and the outer adaptation loop.

mod integrate;
mod velocity;

use std::io::Write;

use log::{debug, info};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functional::{discrete_energy, FunctionalSpec};
use crate::linalg::Point;
use crate::mesh::{interpolate_new_mesh, PointLocator, SimplicialMesh};
use crate::metric::{build_metric, recover_hessian, MetricField, MetricKind};
use crate::quality::{mesh_quality, MeshQuality};

pub use integrate::{integrate_interval, IntervalOutcome, ENERGY_TOLERANCE, MIN_STEP};
pub use velocity::{assemble_velocities, local_velocities, project_boundary, BoundaryConstraint, VelocityField};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptationConfig {
    pub tau: f64,
    /// Pseudo-time integrated per outer iteration.
    pub t_interval: f64,
    /// Euler steps per outer iteration. The flow is stiff (stable steps
    /// shrink like the squared edge length), so this, not `t_interval`,
    /// usually ends an interval.
    pub max_inner_steps: usize,
    pub max_outer_iters: usize,
    /// Outer loop stops once no vertex moves farther than this.
    pub displacement_tol: f64,
    /// Fraction of the shortest incident edge a vertex may move per step.
    pub step_safety: f64,
    /// Multiplies the metric after it is built. Only for invariance checks.
    pub metric_scale: f64,
}

impl AdaptationConfig {
    /// Defaults for the unit box in `d` dimensions (tolerance `1e-4 · √d`).
    pub fn for_dim(d: usize) -> Self {
        AdaptationConfig {
            tau: 0.1,
            t_interval: 1.0,
            max_inner_steps: 1000,
            max_outer_iters: 20,
            displacement_tol: 1e-4 * (d as f64).sqrt(),
            step_safety: 0.5,
            metric_scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tau", self.tau),
            ("t_interval", self.t_interval),
            ("displacement_tol", self.displacement_tol),
            ("metric_scale", self.metric_scale),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} = {v} must be positive")));
            }
        }
        if !(self.step_safety > 0.0 && self.step_safety <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "step_safety = {} must lie in (0, 1]",
                self.step_safety
            )));
        }
        if self.max_inner_steps == 0 || self.max_outer_iters == 0 {
            return Err(Error::InvalidArgument("iteration limits must be at least 1".into()));
        }
        Ok(())
    }
}

/// Where nodal values of `u` come from when the mesh moves.
pub enum FieldSource<'a, const D: usize> {
    /// Evaluate a function at the vertices.
    Analytic(&'a (dyn Fn(&Point<D>) -> f64 + Sync)),
    /// Nodal values on a fixed mesh, linearly interpolated to the vertices.
    Nodal {
        mesh: &'a SimplicialMesh<D>,
        values: &'a [f64],
    },
}

impl<const D: usize> FieldSource<'_, D> {
    pub fn sample(&self, mesh: &SimplicialMesh<D>) -> Result<Vec<f64>> {
        match self {
            FieldSource::Analytic(f) => Ok(mesh.vertices().iter().map(|p| f(p)).collect()),
            FieldSource::Nodal { mesh: source, values } => {
                if values.len() != source.n_vertices() {
                    return Err(Error::InvalidArgument(format!(
                        "{} nodal values for {} vertices",
                        values.len(),
                        source.n_vertices()
                    )));
                }
                let mut locator = PointLocator::new(source);
                mesh.vertices()
                    .iter()
                    .map(|p| {
                        let loc = locator.locate(p)?;
                        Ok(source
                            .element(loc.element)
                            .iter()
                            .zip(loc.barycentric())
                            .map(|(&v, &l)| l * values[v])
                            .sum())
                    })
                    .collect()
            }
        }
    }
}

/// One line of the outer-loop diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationDiagnostics {
    pub iter: usize,
    pub max_displacement: f64,
    #[serde(rename = "I_h")]
    pub energy: f64,
    #[serde(rename = "Q_eq")]
    pub q_eq: f64,
    #[serde(rename = "Q_ali")]
    pub q_ali: f64,
    pub inner_steps: usize,
}

#[derive(Debug, Clone)]
pub struct Adaptation<const D: usize> {
    pub mesh: SimplicialMesh<D>,
    pub diagnostics: Vec<IterationDiagnostics>,
    pub converged: bool,
    /// Metric rebuilt on the final mesh.
    pub metric: MetricField<D>,
    /// Quality of the final mesh against the reference mesh in that metric.
    pub quality: MeshQuality,
}

/// Metric for `u` sampled on `mesh`, scaled by `config.metric_scale`.
pub fn metric_for<const D: usize>(
    mesh: &SimplicialMesh<D>,
    u: &FieldSource<D>,
    kind: MetricKind,
    config: &AdaptationConfig,
) -> Result<MetricField<D>> {
    let values = u.sample(mesh)?;
    let metric = build_metric(mesh, &recover_hessian(mesh, &values)?, kind);
    Ok(if config.metric_scale == 1.0 {
        metric
    } else {
        metric.scaled(mesh, config.metric_scale)
    })
}

/// Adapt `initial` to `u`, using `initial` as the reference mesh.
pub fn adapt<const D: usize>(
    initial: &SimplicialMesh<D>,
    u: &FieldSource<D>,
    spec: &FunctionalSpec,
    kind: MetricKind,
    config: &AdaptationConfig,
) -> Result<Adaptation<D>> {
    adapt_with_reference(initial, initial, u, spec, kind, config)
}

/// Outer loop: sample `u`, build the metric, integrate the mesh equation from
/// the reference mesh and map the result back to a new physical mesh, until
/// the physical mesh stops moving.
pub fn adapt_with_reference<const D: usize>(
    initial: &SimplicialMesh<D>,
    reference: &SimplicialMesh<D>,
    u: &FieldSource<D>,
    spec: &FunctionalSpec,
    kind: MetricKind,
    config: &AdaptationConfig,
) -> Result<Adaptation<D>> {
    config.validate()?;
    spec.warn_if_out_of_range(D);
    initial.check_orientation()?;
    reference.check_orientation()?;
    if !initial.shares_connectivity(reference) {
        return Err(Error::ContractViolation(
            "initial and reference meshes must share connectivity".into(),
        ));
    }

    let mut physical = initial.clone();
    let mut diagnostics = Vec::new();
    let mut converged = false;
    for iter in 1..=config.max_outer_iters {
        let step = || -> Result<(SimplicialMesh<D>, IterationDiagnostics)> {
            let metric = metric_for(&physical, u, kind, config)?;
            let outcome = integrate_interval(&physical, reference, &metric, spec, config)?;
            let quality = mesh_quality(&physical, &outcome.computational, &metric)?;
            let next = interpolate_new_mesh(&physical, &outcome.computational, reference)?;
            next.check_orientation()?;
            let diag = IterationDiagnostics {
                iter,
                max_displacement: next.max_distance(&physical),
                energy: outcome.final_energy(),
                q_eq: quality.q_eq,
                q_ali: quality.q_ali,
                inner_steps: outcome.accepted_steps,
            };
            Ok((next, diag))
        };
        let (next, diag) = step().map_err(|e| e.at_iteration(iter))?;
        debug!(
            "iter {iter}: displacement {:.3e}, I_h {:.6e}, Q_eq {:.4}, Q_ali {:.4}, {} steps",
            diag.max_displacement, diag.energy, diag.q_eq, diag.q_ali, diag.inner_steps
        );
        diagnostics.push(diag);
        physical = next;
        if diag.max_displacement < config.displacement_tol {
            converged = true;
            break;
        }
    }
    info!(
        "{} after {} outer iterations",
        if converged { "converged" } else { "stopped" },
        diagnostics.len()
    );

    let metric = metric_for(&physical, u, kind, config)?;
    let quality = mesh_quality(&physical, reference, &metric)?;
    Ok(Adaptation {
        mesh: physical,
        diagnostics,
        converged,
        metric,
        quality,
    })
}

/// `I_h` of the current adapted state: physical mesh against the reference.
pub fn adapted_energy<const D: usize>(adaptation: &Adaptation<D>, reference: &SimplicialMesh<D>, spec: &FunctionalSpec) -> Result<f64> {
    discrete_energy(&adaptation.mesh, reference, &adaptation.metric, spec)
}

/// Diagnostics as CSV: `iter,max_displacement,I_h,Q_eq,Q_ali`.
pub fn write_diagnostics_csv<W: Write>(diagnostics: &[IterationDiagnostics], w: W) -> std::io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["iter", "max_displacement", "I_h", "Q_eq", "Q_ali"])?;
    for d in diagnostics {
        out.write_record([
            d.iter.to_string(),
            d.max_displacement.to_string(),
            d.energy.to_string(),
            d.q_eq.to_string(),
            d.q_ali.to_string(),
        ])?;
    }
    out.flush()
}
