//! One-dimensional test problem with a non-convex lower level and a known
//! unique solution.
//!
//! Upper objective x + x·y over x ∈ [1, 10]; lower objective −sin(x·y) over
//! y ∈ [−2, 2]. For every x the lower problem has multiple global minimizers
//! (2kπ + π/2)/x ∩ [−2, 2], which is exactly the regime where a trainable
//! inner initialization pays off. The unique bilevel solution is
//! (x*, y*) = (11π/4, −2) with upper value −11π/4.

use std::f64::consts::PI;

use super::{BilevelProblem, KnownOptimum};
use crate::boxset::BoxSet;
use crate::vector::Vector;

#[derive(Clone, Debug)]
pub struct NonconvexSine {
    upper_box: BoxSet,
    lower_box: BoxSet,
}

pub fn nonconvex_sine() -> NonconvexSine {
    NonconvexSine {
        upper_box: BoxSet::new(vec![1.0], vec![10.0]).expect("static bounds"),
        lower_box: BoxSet::symmetric(1, 2.0),
    }
}

impl NonconvexSine {
    pub const OPT_X: f64 = 11.0 * PI / 4.0;
    pub const OPT_Y: f64 = -2.0;
    pub const OPT_UPPER: f64 = -11.0 * PI / 4.0;

    /// Global minimizers of the lower problem: {(2kπ + π/2)/x} ∩ [−2, 2].
    pub fn lower_minimizers(&self, x: f64) -> Vec<f64> {
        let mut out = Vec::new();
        // (2kπ + π/2)/x ∈ [−2, 2]  ⟺  k ∈ [(−2x − π/2)/2π, (2x − π/2)/2π]
        let k_lo = ((-2.0 * x - PI / 2.0) / (2.0 * PI)).ceil() as i64;
        let k_hi = ((2.0 * x - PI / 2.0) / (2.0 * PI)).floor() as i64;
        for k in k_lo..=k_hi {
            let y = (2.0 * k as f64 * PI + PI / 2.0) / x;
            if (-2.0..=2.0).contains(&y) {
                out.push(y);
            }
        }
        out
    }

    /// Stationary points of the box-constrained lower problem: interior zeros
    /// of ∇_y f (both parities, minimizers and maximizers) plus box endpoints
    /// whose gradient points outward.
    pub fn lower_stationary_points(&self, x: f64) -> Vec<f64> {
        let mut out = Vec::new();
        // interior: x·y = π/2 + jπ
        let j_lo = ((-2.0 * x - PI / 2.0) / PI).ceil() as i64;
        let j_hi = ((2.0 * x - PI / 2.0) / PI).floor() as i64;
        for j in j_lo..=j_hi {
            let y = (PI / 2.0 + j as f64 * PI) / x;
            if (-2.0..=2.0).contains(&y) {
                out.push(y);
            }
        }
        // boundary: stationary when a descent step would leave the box
        let grad = |y: f64| -x * (x * y).cos();
        if grad(-2.0) >= 0.0 {
            out.push(-2.0);
        }
        if grad(2.0) <= 0.0 {
            out.push(2.0);
        }
        out.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out
    }
}

impl BilevelProblem for NonconvexSine {
    fn name(&self) -> &'static str {
        "nonconvex-sine"
    }

    fn upper_dim(&self) -> usize {
        1
    }

    fn lower_dim(&self) -> usize {
        1
    }

    fn upper_box(&self) -> &BoxSet {
        &self.upper_box
    }

    fn lower_box(&self) -> &BoxSet {
        &self.lower_box
    }

    fn upper_objective(&self, x: &Vector, y: &Vector) -> f64 {
        x[0] + x[0] * y[0]
    }

    fn lower_objective(&self, x: &Vector, y: &Vector) -> f64 {
        -(x[0] * y[0]).sin()
    }

    fn grad_x_upper(&self, _x: &Vector, y: &Vector) -> Vector {
        Vector::from_raw(vec![1.0 + y[0]])
    }

    fn grad_y_upper(&self, x: &Vector, _y: &Vector) -> Vector {
        Vector::from_raw(vec![x[0]])
    }

    fn grad_y_lower(&self, x: &Vector, y: &Vector) -> Vector {
        Vector::from_raw(vec![-x[0] * (x[0] * y[0]).cos()])
    }

    fn hvp_yy_lower(&self, x: &Vector, y: &Vector, v: &Vector) -> Option<Vector> {
        Some(Vector::from_raw(vec![
            x[0] * x[0] * (x[0] * y[0]).sin() * v[0],
        ]))
    }

    fn hvp_xy_lower(&self, x: &Vector, y: &Vector, v: &Vector) -> Option<Vector> {
        let phase = x[0] * y[0];
        Some(Vector::from_raw(vec![
            (-phase.cos() + phase * phase.sin()) * v[0],
        ]))
    }

    fn lipschitz_grad_lower(&self) -> Option<f64> {
        // sup over x ∈ [1,10] of x² (|∂²_yy f| = x²|sin| ≤ x²)
        Some(100.0)
    }

    fn known_optimum(&self) -> Option<KnownOptimum> {
        Some(KnownOptimum {
            x: Vector::from_raw(vec![Self::OPT_X]),
            y: Vector::from_raw(vec![Self::OPT_Y]),
            upper_value: Self::OPT_UPPER,
        })
    }

    fn lower_objective_range(&self) -> Option<(f64, f64)> {
        Some((-1.0, 1.0))
    }

    fn lower_optimal_value(&self, x: &Vector) -> Option<f64> {
        // every x ∈ [1,10] keeps at least one global minimizer inside the box
        debug_assert!(!self.lower_minimizers(x[0]).is_empty());
        Some(-1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lower_value_at_known_optimum_is_minus_one() {
        let p = nonconvex_sine();
        let x = Vector::from_slice(&[NonconvexSine::OPT_X]);
        let y = Vector::from_slice(&[NonconvexSine::OPT_Y]);
        assert!((p.lower_objective(&x, &y) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn known_optimum_values() {
        let p = nonconvex_sine();
        let opt = p.known_optimum().unwrap();
        assert_eq!(opt.x[0], 11.0 * PI / 4.0);
        assert_eq!(opt.y[0], -2.0);
        // F(x*, y*) = x*(1 + y*) = −11π/4, cross-checked against the
        // value-function oracle in the theory module.
        assert!((p.upper_objective(&opt.x, &opt.y) - opt.upper_value).abs() < 1e-12);
        assert!((opt.upper_value + 8.639_379_797_371_932).abs() < 1e-12);
    }

    #[test]
    fn minimizer_set_nonempty_across_grid() {
        let p = nonconvex_sine();
        for i in 0..=900 {
            let x = 1.0 + 9.0 * (i as f64) / 900.0;
            let mins = p.lower_minimizers(x);
            assert!(!mins.is_empty(), "empty minimizer set at x = {x}");
            for y in mins {
                // each enumerated point attains the global lower value −1
                let f = p.lower_objective(&Vector::from_slice(&[x]), &Vector::from_slice(&[y]));
                assert!((f + 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn stationary_set_contains_minimizers() {
        let p = nonconvex_sine();
        for x in [1.0, 2.5, 5.5, NonconvexSine::OPT_X, 9.9] {
            let stationary = p.lower_stationary_points(x);
            for y in p.lower_minimizers(x) {
                assert!(
                    stationary.iter().any(|s| (s - y).abs() < 1e-12),
                    "minimizer {y} missing from stationary set at x = {x}"
                );
            }
        }
    }
}
