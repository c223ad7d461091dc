//! Per-coordinate interval sets with projection and the projection's
//! generalized-Jacobian diagonal.
//!
//! Bounds may be infinite; an all-infinite box behaves as the whole space and
//! its projection is the identity. Theory checks that require compactness
//! refuse boxes with infinite bounds.

use crate::error::{Error, Result};
use crate::vector::Vector;

/// Absolute tolerance deciding whether a coordinate counts as clamped.
///
/// A coordinate within this distance of a bound is treated as clamped
/// (mask 0), which zeroes adjoint flow through saturated coordinates.
pub const DEFAULT_ACTIVE_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct BoxSet {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxSet {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        for (i, (lo, hi)) in lower.iter().zip(upper.iter()).enumerate() {
            if lo.is_nan() || hi.is_nan() {
                return Err(Error::invalid(format!("NaN bound at coordinate {i}")));
            }
            if lo > hi {
                return Err(Error::invalid(format!(
                    "lower bound {lo} exceeds upper bound {hi} at coordinate {i}"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// `[-radius, radius]` in every coordinate.
    pub fn symmetric(dim: usize, radius: f64) -> Self {
        Self {
            lower: vec![-radius; dim],
            upper: vec![radius; dim],
        }
    }

    pub fn whole_space(dim: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; dim],
            upper: vec![f64::INFINITY; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// True when every bound is finite (compact box).
    pub fn is_bounded(&self) -> bool {
        self.lower.iter().all(|v| v.is_finite()) && self.upper.iter().all(|v| v.is_finite())
    }

    pub fn contains(&self, p: &Vector, tol: f64) -> bool {
        p.dim() == self.dim()
            && p.iter()
                .zip(self.lower.iter().zip(self.upper.iter()))
                .all(|(v, (lo, hi))| *v >= lo - tol && *v <= hi + tol)
    }

    /// Coordinate-wise clamp into `[lower, upper]`. Idempotent.
    pub fn project(&self, p: &Vector) -> Result<Vector> {
        p.check_dim(self.dim())?;
        Ok(Vector::from_raw(
            p.iter()
                .zip(self.lower.iter().zip(self.upper.iter()))
                .map(|(v, (lo, hi))| v.clamp(*lo, *hi))
                .collect(),
        ))
    }

    /// Diagonal of the projection's generalized Jacobian at `p`: 1 where the
    /// coordinate is strictly inside the box (beyond `tol`), 0 where clamped.
    pub fn active_mask(&self, p: &Vector, tol: f64) -> Result<Vector> {
        p.check_dim(self.dim())?;
        Ok(Vector::from_raw(
            p.iter()
                .zip(self.lower.iter().zip(self.upper.iter()))
                .map(|(v, (lo, hi))| {
                    if *v > lo + tol && *v < hi - tol {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn clamp_at_upper_bound() {
        let b = BoxSet::symmetric(1, 2.0);
        let p = Vector::from_slice(&[3.0]);
        assert_eq!(b.project(&p).unwrap().as_slice(), &[2.0]);
    }

    #[test]
    fn interior_point_is_fixed() {
        let b = BoxSet::symmetric(1, 2.0);
        let p = Vector::from_slice(&[0.5]);
        assert_eq!(b.project(&p).unwrap().as_slice(), &[0.5]);
    }

    #[test]
    fn coordinate_wise_clamp() {
        let b = BoxSet::symmetric(3, 1.0);
        let p = Vector::from_slice(&[-5.0, 0.0, 5.0]);
        assert_eq!(b.project(&p).unwrap().as_slice(), &[-1.0, 0.0, 1.0]);
    }

    #[test]
    fn mask_boundary_and_interior() {
        let b = BoxSet::symmetric(1, 2.0);
        let boundary = Vector::from_slice(&[2.0]);
        let interior = Vector::from_slice(&[0.0]);
        assert_eq!(
            b.active_mask(&boundary, DEFAULT_ACTIVE_TOL).unwrap().as_slice(),
            &[0.0]
        );
        assert_eq!(
            b.active_mask(&interior, DEFAULT_ACTIVE_TOL).unwrap().as_slice(),
            &[1.0]
        );
    }

    #[test]
    fn mask_within_tolerance_is_clamped() {
        let b = BoxSet::symmetric(2, 2.0);
        let p = Vector::from_slice(&[-2.0 + 1e-12, 1.0]);
        assert_eq!(
            b.active_mask(&p, DEFAULT_ACTIVE_TOL).unwrap().as_slice(),
            &[0.0, 1.0]
        );
    }

    #[test]
    fn infinite_box_projection_is_identity() {
        let b = BoxSet::whole_space(3);
        let p = Vector::from_slice(&[1e30, -1e30, 0.0]);
        assert_eq!(b.project(&p).unwrap(), p);
        assert!(!b.is_bounded());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let b = BoxSet::symmetric(2, 1.0);
        let p = Vector::from_slice(&[0.0]);
        assert!(b.project(&p).is_err());
        assert!(b.active_mask(&p, 1e-9).is_err());
    }

    #[test]
    fn invalid_bounds_rejected() {
        assert!(BoxSet::new(vec![1.0], vec![0.0]).is_err());
        assert!(BoxSet::new(vec![f64::NAN], vec![1.0]).is_err());
    }

    proptest! {
        // ‖P(p) − P(q)‖ ≤ ‖p − q‖
        #[test]
        fn projection_non_expansive(
            p in proptest::collection::vec(-10.0_f64..10.0, 4),
            q in proptest::collection::vec(-10.0_f64..10.0, 4),
        ) {
            let b = BoxSet::new(vec![-3.0, -1.0, 0.0, f64::NEG_INFINITY],
                                vec![3.0, 1.0, 0.5, f64::INFINITY]).unwrap();
            let pv = Vector::from_slice(&p);
            let qv = Vector::from_slice(&q);
            let pp = b.project(&pv).unwrap();
            let pq = b.project(&qv).unwrap();
            prop_assert!((&pp - &pq).norm() <= (&pv - &qv).norm() + 1e-15);
        }

        #[test]
        fn projection_idempotent(p in proptest::collection::vec(-10.0_f64..10.0, 3)) {
            let b = BoxSet::symmetric(3, 2.5);
            let pv = Vector::from_slice(&p);
            let once = b.project(&pv).unwrap();
            let twice = b.project(&once).unwrap();
            prop_assert_eq!(once, twice);
        }
    }
}
