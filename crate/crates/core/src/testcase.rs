//! Analytic test functions on the unit square (ids 1, 2) and unit cube (ids 3, 4, 5).

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Sphere centres (in the scaled coordinates `4x`) of the nine-term function.
const SPHERES: [[f64; 3]; 9] = [
    [2.0, 2.0, 2.0],
    [2.5, 2.5, 2.5],
    [2.5, 1.5, 2.5],
    [1.5, 2.5, 2.5],
    [1.5, 1.5, 2.5],
    [2.5, 2.5, 1.5],
    [2.5, 1.5, 1.5],
    [1.5, 2.5, 1.5],
    [1.5, 1.5, 1.5],
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TestCase {
    pub id: u8,
    pub dim: usize,
}

impl TestCase {
    pub fn new(id: u8) -> Result<Self> {
        match id {
            1 | 2 => Ok(TestCase { id, dim: 2 }),
            3..=5 => Ok(TestCase { id, dim: 3 }),
            _ => Err(Error::UnknownExample(id)),
        }
    }

    pub fn all() -> impl Iterator<Item = TestCase> {
        (1..=5).map(|id| TestCase::new(id).expect("ids 1..=5 exist"))
    }

    /// Value at `x`; only the first `dim` coordinates are read.
    pub fn eval(&self, x: &[f64]) -> f64 {
        eval_unchecked(self.id, x)
    }
}

fn eval_unchecked(id: u8, p: &[f64]) -> f64 {
    match id {
        1 => (-30.0 * (p[1] - 0.5 - 0.25 * (2.0 * PI * p[0]).sin())).tanh(),
        2 => (25.0 * p[1]).tanh() - (25.0 * (p[0] - p[1] - 0.5)).tanh(),
        3 => SPHERES
            .iter()
            .map(|c| {
                let r2: f64 = (0..3).map(|a| (4.0 * p[a] - c[a]).powi(2)).sum();
                (30.0 * (r2 - 0.1875)).tanh()
            })
            .sum(),
        4 => (-30.0 * (p[2] - 0.5 - 0.25 * (2.0 * PI * p[0]).sin() * (PI * p[1]).sin())).tanh(),
        5 => {
            let inner = (-30.0 * (p[1] - 0.5 - 0.25 * (2.0 * PI * p[0]).sin())).tanh();
            (-30.0 * (p[2] - inner)).tanh()
        }
        _ => unreachable!("id checked by caller"),
    }
}

/// Evaluate test function `id` at `point`.
pub fn eval_test_function(id: u8, point: &[f64]) -> Result<f64> {
    let case = TestCase::new(id)?;
    if point.len() < case.dim {
        return Err(Error::InvalidArgument(format!(
            "test function {id} needs {} coordinates, got {}",
            case.dim,
            point.len()
        )));
    }
    Ok(case.eval(point))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_sets() {
        for x in [0.0, 0.13, 0.5, 0.77] {
            let y = 0.5 + 0.25 * (2.0 * PI * x).sin();
            assert!(eval_test_function(1, &[x, y]).unwrap().abs() < 1e-14);
            for yy in [0.2, 0.9] {
                let z = 0.5 + 0.25 * (2.0 * PI * x).sin() * (PI * yy).sin();
                assert!(eval_test_function(4, &[x, yy, z]).unwrap().abs() < 1e-14);
            }
        }
    }

    #[test]
    fn second_function_at_origin() {
        let v = eval_test_function(2, &[0.0, 0.0]).unwrap();
        assert!((v - 12.5f64.tanh()).abs() < 1e-15);
        assert!((v - 1.0).abs() < 1e-7);
    }

    #[test]
    fn sphere_sum_at_centre() {
        // at the cube centre the first term is tanh(-5.625); the others are
        // all at squared distance 0.75 in scaled coordinates
        let v = eval_test_function(3, &[0.5, 0.5, 0.5]).unwrap();
        let expect = (30.0f64 * -0.1875).tanh() + 8.0 * (30.0f64 * (0.75 - 0.1875)).tanh();
        assert!((v - expect).abs() < 1e-13);
    }

    #[test]
    fn dimensions_and_unknown_ids() {
        assert_eq!(TestCase::new(2).unwrap().dim, 2);
        assert_eq!(TestCase::new(5).unwrap().dim, 3);
        assert_eq!(eval_test_function(6, &[0.0; 3]), Err(Error::UnknownExample(6)));
        assert!(eval_test_function(4, &[0.0, 0.0]).is_err());
        assert_eq!(TestCase::all().count(), 5);
    }
}
