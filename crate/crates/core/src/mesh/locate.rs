use crate::error::{Error, Result};
use crate::linalg::{self, Point};

use super::SimplicialMesh;

/// Barycentric tolerance for accepting a point as inside an element.
pub const LOCATE_TOLERANCE: f64 = 1e-10;

/// Result of a point query: containing element plus barycentric coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Location {
    pub element: usize,
    coords: [f64; 4],
    len: usize,
}

impl Location {
    /// Barycentric coordinates, one per local vertex of the element.
    pub fn barycentric(&self) -> &[f64] {
        &self.coords[..self.len]
    }
}

fn barycentric<const D: usize>(mesh: &SimplicialMesh<D>, k: usize, p: &Point<D>) -> Option<[f64; 4]> {
    let el = mesh.element(k);
    let e = mesh.edge_matrix(k);
    let inv = linalg::inverse(&e)?;
    let rel = inv * (p - mesh.vertex(el[0]));
    let mut out = [0.0; 4];
    let mut sum = 0.0;
    for j in 0..D {
        out[j + 1] = rel[j];
        sum += rel[j];
    }
    out[0] = 1.0 - sum;
    Some(out)
}

fn min_coord(c: &[f64]) -> (usize, f64) {
    c.iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |best, (j, l)| if l < best.1 { (j, l) } else { best })
}

/// Point location by a visibility walk across faces, starting from the
/// element of the previous hit. Falls back to a scan of all elements when the
/// walk leaves the mesh or does not terminate.
#[derive(Debug, Clone)]
pub struct PointLocator<'a, const D: usize> {
    mesh: &'a SimplicialMesh<D>,
    last: usize,
}

impl<'a, const D: usize> PointLocator<'a, D> {
    pub fn new(mesh: &'a SimplicialMesh<D>) -> Self {
        PointLocator { mesh, last: 0 }
    }

    pub fn locate(&mut self, p: &Point<D>) -> Result<Location> {
        let start = self.last;
        self.locate_from(p, start)
    }

    /// Start the walk from a caller-provided element guess.
    pub fn locate_from(&mut self, p: &Point<D>, start: usize) -> Result<Location> {
        let found = self.walk(p, start).or_else(|| self.scan(p));
        match found {
            Some(loc) => {
                self.last = loc.element;
                Ok(loc)
            }
            None => Err(Error::PointNotFound {
                point: p.iter().copied().collect(),
            }),
        }
    }

    fn walk(&self, p: &Point<D>, start: usize) -> Option<Location> {
        let mesh = self.mesh;
        let mut k = start.min(mesh.n_elements() - 1);
        let mut previous = usize::MAX;
        for _ in 0..mesh.n_elements() {
            let coords = barycentric(mesh, k, p)?;
            let (jmin, lmin) = min_coord(&coords[..=D]);
            if lmin >= -LOCATE_TOLERANCE {
                return Some(Location {
                    element: k,
                    coords,
                    len: D + 1,
                });
            }
            let next = mesh.topology().neighbor(k, jmin)?;
            if next == previous {
                // bouncing between two elements: the point sits on their
                // shared face up to round-off, take the better of the two
                return None;
            }
            previous = k;
            k = next;
        }
        None
    }

    fn scan(&self, p: &Point<D>) -> Option<Location> {
        let mesh = self.mesh;
        let mut best: Option<(f64, usize, [f64; 4])> = None;
        for k in 0..mesh.n_elements() {
            let Some(coords) = barycentric(mesh, k, p) else {
                continue;
            };
            let (_, lmin) = min_coord(&coords[..=D]);
            if best.as_ref().is_none_or(|b| lmin > b.0) {
                best = Some((lmin, k, coords));
            }
        }
        let (lmin, element, coords) = best?;
        (lmin >= -LOCATE_TOLERANCE).then_some(Location {
            element,
            coords,
            len: D + 1,
        })
    }
}

impl<const D: usize> SimplicialMesh<D> {
    /// One-off point query. Use a [`PointLocator`] for batches.
    pub fn locate_point(&self, p: &Point<D>) -> Result<Location> {
        PointLocator::new(self).locate(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_structured_mesh;

    #[test]
    fn centroid_is_found_in_its_element() {
        let m = build_structured_mesh::<2>(5).unwrap();
        for k in [0, 7, 49] {
            let loc = m.locate_point(&m.centroid(k)).unwrap();
            assert_eq!(loc.element, k);
            for l in loc.barycentric() {
                assert!((l - 1.0 / 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn vertex_gives_unit_coordinate() {
        let m = build_structured_mesh::<3>(3).unwrap();
        let v = 21;
        let loc = m.locate_point(m.vertex(v)).unwrap();
        let el = m.element(loc.element);
        let j = el.iter().position(|&x| x == v).expect("vertex must belong to the element");
        for (l, &lam) in loc.barycentric().iter().enumerate() {
            let expect = if l == j { 1.0 } else { 0.0 };
            assert!((lam - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn outside_point_is_not_found() {
        let m = build_structured_mesh::<2>(3).unwrap();
        let r = m.locate_point(&Point::<2>::new(1.5, 0.5));
        assert!(matches!(r, Err(Error::PointNotFound { .. })));
        // just outside the snap tolerance
        let r = m.locate_point(&Point::<2>::new(0.5, -1e-8));
        assert!(r.is_err());
        // within it
        assert!(m.locate_point(&Point::<2>::new(0.5, -1e-12)).is_ok());
    }
}
