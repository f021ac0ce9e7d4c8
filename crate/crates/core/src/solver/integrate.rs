use log::{debug, trace};

use crate::error::{Error, Result};
use crate::functional::FunctionalSpec;
use crate::linalg::{self, Point};
use crate::mesh::SimplicialMesh;
use crate::metric::MetricField;

use super::velocity::{BoundaryConstraint, FrozenPhysical};
use super::AdaptationConfig;

/// Steps whose energy exceeds the previous one by more than this relative
/// amount are rejected; below it the difference is round-off.
pub const ENERGY_TOLERANCE: f64 = 1e-12;

/// Smallest step size before the integrator gives up.
pub const MIN_STEP: f64 = 1e-12;

/// The interval ends early once a full step would lower `I_h` by less than
/// this fraction (to first order). Below it, accept/reject decisions are
/// decided by round-off in `I_h`.
pub const STEADY_TOLERANCE: f64 = 1e-10;

/// Fraction of the first-order energy decrease a step must achieve.
const ARMIJO: f64 = 0.5;

/// Growth of the step size after an accepted step.
const STEP_GROWTH: f64 = 1.25;

/// Result of integrating the mesh equation over one pseudo-time interval.
#[derive(Debug, Clone)]
pub struct IntervalOutcome<const D: usize> {
    pub computational: SimplicialMesh<D>,
    /// `I_h` at the start and after every accepted step.
    pub energy: Vec<f64>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    /// Pseudo-time actually covered.
    pub time: f64,
}

impl<const D: usize> IntervalOutcome<D> {
    pub fn final_energy(&self) -> f64 {
        *self.energy.last().expect("energy trace starts with the initial value")
    }
}

/// Integrate `dξ_i/dt = (P_i/τ) Σ |K| v` with the physical mesh frozen,
/// starting from `start` (normally the reference mesh).
///
/// Explicit Euler with step control: each step is limited so no vertex moves
/// more than `step_safety` times its shortest incident edge, and is halved
/// and retried while it inverts a computational element or fails to lower
/// `I_h` by half its first-order decrease. After a rejection the step never
/// grows past the size that was then accepted: growing back to the stability
/// limit lets the stiffest mode ring, and the ringing amplifies round-off.
/// The interval ends early once `I_h` is steady.
pub fn integrate_interval<const D: usize>(
    physical: &SimplicialMesh<D>,
    start: &SimplicialMesh<D>,
    metric: &MetricField<D>,
    spec: &FunctionalSpec,
    config: &AdaptationConfig,
) -> Result<IntervalOutcome<D>> {
    config.validate()?;
    if !physical.shares_connectivity(start) {
        return Err(Error::ContractViolation(
            "physical and computational meshes have different connectivity".into(),
        ));
    }
    start.check_orientation()?;

    let frozen = FrozenPhysical::new(physical, metric, spec, config.tau)?;
    let constraint = BoundaryConstraint::from_mesh(start);
    let velocity = |xi: &[Point<D>]| -> Result<(f64, Vec<Point<D>>)> {
        let (energy, blocks) = frozen.evaluate(xi)?;
        let mut v = frozen.assemble(&blocks);
        constraint.apply(&mut v);
        Ok((energy, v))
    };

    let mut xi = start.vertices().to_vec();
    let (mut energy, mut v) = velocity(&xi)?;
    let mut trace = vec![energy];
    let (mut t, mut dt_prev) = (0.0, f64::INFINITY);
    let (mut accepted, mut rejected) = (0, 0);
    let mut ceiling = f64::INFINITY;
    let mut retried = false;

    while t < config.t_interval && accepted < config.max_inner_steps {
        let cap = displacement_cap(start, &xi, &v, config.step_safety);
        if cap.is_infinite() {
            debug!("zero velocity at t = {t}");
            break;
        }
        let mut dt = cap.min(STEP_GROWTH * dt_prev).min(ceiling).min(config.t_interval - t);
        let rate = frozen.descent_rate(&v);
        if dt * rate <= STEADY_TOLERANCE * energy.abs() {
            debug!("steady at t = {t}");
            break;
        }
        loop {
            let bound = energy - ARMIJO * dt * rate + ENERGY_TOLERANCE * energy.abs();
            let candidate: Vec<Point<D>> = xi.iter().zip(&v).map(|(x, vi)| x + vi * dt).collect();
            let outcome = match first_inverted(start, &candidate) {
                Some(k) => Err(k),
                None => match velocity(&candidate) {
                    Ok((e, vn)) if e <= bound => Ok((e, vn)),
                    Ok(_) => Err(most_compressed(start, &candidate)),
                    Err(err) => Err(err.element().unwrap_or_else(|| most_compressed(start, &candidate))),
                },
            };
            trace!("t = {t:.16e}, dt = {dt:.16e}, accepted = {}", outcome.is_ok());
            match outcome {
                Ok((e, vn)) => {
                    xi = candidate;
                    energy = e;
                    v = vn;
                    trace.push(e);
                    t += dt;
                    dt_prev = dt;
                    if retried {
                        ceiling = ceiling.min(dt);
                        retried = false;
                    }
                    accepted += 1;
                    break;
                }
                Err(element) => {
                    rejected += 1;
                    retried = true;
                    dt *= 0.5;
                    if dt < MIN_STEP {
                        return Err(Error::Stall {
                            t,
                            dt,
                            element: Some(element),
                        });
                    }
                }
            }
        }
    }

    debug!("interval: t = {t:.4e}, {accepted} steps accepted, {rejected} rejected");
    Ok(IntervalOutcome {
        computational: start.with_vertices(xi),
        energy: trace,
        accepted_steps: accepted,
        rejected_steps: rejected,
        time: t,
    })
}

/// Largest `dt` keeping every vertex within `safety × (shortest incident edge)`.
fn displacement_cap<const D: usize>(mesh: &SimplicialMesh<D>, xi: &[Point<D>], v: &[Point<D>], safety: f64) -> f64 {
    let topo = mesh.topology();
    let mut cap = f64::INFINITY;
    for (i, vi) in v.iter().enumerate() {
        let speed = vi.norm();
        if speed == 0.0 {
            continue;
        }
        let mut h = f64::INFINITY;
        for &(k, _) in topo.patch(i) {
            for &w in topo.element(k) {
                if w != i {
                    h = h.min((xi[w] - xi[i]).norm());
                }
            }
        }
        cap = cap.min(safety * h / speed);
    }
    cap
}

fn computational_det<const D: usize>(mesh: &SimplicialMesh<D>, xi: &[Point<D>], k: usize) -> f64 {
    let el = mesh.element(k);
    let mut e = linalg::Mat::<D>::zeros();
    for j in 0..D {
        e.set_column(j, &(xi[el[j + 1]] - xi[el[0]]));
    }
    linalg::det(&e)
}

fn first_inverted<const D: usize>(mesh: &SimplicialMesh<D>, xi: &[Point<D>]) -> Option<usize> {
    (0..mesh.n_elements()).find(|&k| !(computational_det(mesh, xi, k) > 0.0))
}

/// Element whose volume shrank most relative to `mesh`.
fn most_compressed<const D: usize>(mesh: &SimplicialMesh<D>, xi: &[Point<D>]) -> usize {
    (0..mesh.n_elements())
        .map(|k| (k, computational_det(mesh, xi, k) / linalg::det(&mesh.edge_matrix(k))))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
        .0
}
