//! Convex test problem whose lower level is flat in half its variables.
//!
//! The lower objective ½‖y₁‖² − xᵀy₁ ignores y₂ entirely, so the lower
//! solution set is {(x, anything)}: a whole affine subspace of minimizers.
//! The upper objective ‖x − y₂‖⁴ + ‖y₁ − e‖⁴ picks out y₂ = x and drives
//! x to the all-ones vector e, the known optimum with value 0.

use super::{BilevelProblem, KnownOptimum};
use crate::boxset::BoxSet;
use crate::error::{Error, Result};
use crate::vector::Vector;

/// Practically-unconstrained bound used where no explicit set is imposed:
/// large enough that projections are identities, finite so theory code paths
/// that require boxes stay exercised.
pub const EXTRA_LARGE_BOUND: f64 = 1e6;

#[derive(Clone, Debug)]
pub struct ConvexQuadratic {
    n: usize,
    upper_box: BoxSet,
    lower_box: BoxSet,
}

pub fn convex_quadratic(n: usize) -> Result<ConvexQuadratic> {
    if n == 0 {
        return Err(Error::invalid("dimension must be positive"));
    }
    Ok(ConvexQuadratic {
        n,
        upper_box: BoxSet::symmetric(n, 100.0),
        lower_box: BoxSet::symmetric(2 * n, EXTRA_LARGE_BOUND),
    })
}

impl ConvexQuadratic {
    pub fn block_dim(&self) -> usize {
        self.n
    }
}

fn quartic(diff: &[f64]) -> f64 {
    let sq: f64 = diff.iter().map(|d| d * d).sum();
    sq * sq
}

impl BilevelProblem for ConvexQuadratic {
    fn name(&self) -> &'static str {
        "convex-quadratic"
    }

    fn upper_dim(&self) -> usize {
        self.n
    }

    fn lower_dim(&self) -> usize {
        2 * self.n
    }

    fn upper_box(&self) -> &BoxSet {
        &self.upper_box
    }

    fn lower_box(&self) -> &BoxSet {
        &self.lower_box
    }

    fn upper_objective(&self, x: &Vector, y: &Vector) -> f64 {
        let (y1, y2) = y.split_halves();
        let d2: Vec<f64> = x.iter().zip(y2.iter()).map(|(a, b)| a - b).collect();
        let d1: Vec<f64> = y1.iter().map(|v| v - 1.0).collect();
        quartic(&d2) + quartic(&d1)
    }

    fn lower_objective(&self, x: &Vector, y: &Vector) -> f64 {
        let (y1, _) = y.split_halves();
        let half_sq: f64 = 0.5 * y1.iter().map(|v| v * v).sum::<f64>();
        let inner: f64 = x.iter().zip(y1.iter()).map(|(a, b)| a * b).sum();
        half_sq - inner
    }

    fn grad_x_upper(&self, x: &Vector, y: &Vector) -> Vector {
        let (_, y2) = y.split_halves();
        let diff: Vec<f64> = x.iter().zip(y2.iter()).map(|(a, b)| a - b).collect();
        let sq: f64 = diff.iter().map(|d| d * d).sum();
        Vector::from_raw(diff.iter().map(|d| 4.0 * sq * d).collect())
    }

    fn grad_y_upper(&self, x: &Vector, y: &Vector) -> Vector {
        let (y1, y2) = y.split_halves();
        let d1: Vec<f64> = y1.iter().map(|v| v - 1.0).collect();
        let sq1: f64 = d1.iter().map(|d| d * d).sum();
        let d2: Vec<f64> = x.iter().zip(y2.iter()).map(|(a, b)| a - b).collect();
        let sq2: f64 = d2.iter().map(|d| d * d).sum();
        let g1: Vec<f64> = d1.iter().map(|d| 4.0 * sq1 * d).collect();
        let g2: Vec<f64> = d2.iter().map(|d| -4.0 * sq2 * d).collect();
        Vector::concat(&g1, &g2)
    }

    fn grad_y_lower(&self, x: &Vector, y: &Vector) -> Vector {
        let (y1, _) = y.split_halves();
        let g1: Vec<f64> = y1.iter().zip(x.iter()).map(|(v, a)| v - a).collect();
        Vector::concat(&g1, &vec![0.0; self.n])
    }

    fn hvp_yy_lower(&self, _x: &Vector, _y: &Vector, v: &Vector) -> Option<Vector> {
        let (v1, _) = v.split_halves();
        Some(Vector::concat(v1, &vec![0.0; self.n]))
    }

    fn hvp_xy_lower(&self, _x: &Vector, _y: &Vector, v: &Vector) -> Option<Vector> {
        let (v1, _) = v.split_halves();
        Some(Vector::from_raw(v1.iter().map(|a| -a).collect()))
    }

    fn lipschitz_grad_lower(&self) -> Option<f64> {
        Some(1.0)
    }

    fn known_optimum(&self) -> Option<KnownOptimum> {
        Some(KnownOptimum {
            x: Vector::ones(self.n),
            y: Vector::ones(2 * self.n),
            upper_value: 0.0,
        })
    }

    fn lower_optimal_value(&self, x: &Vector) -> Option<f64> {
        // minimized at y₁ = x: ½‖x‖² − ‖x‖² = −½‖x‖²
        Some(-0.5 * x.dot(x))
    }
}
