//! The bilevel-problem interface and the catalog of concrete problems used in
//! experiments and tests.
//!
//! A problem bundles the upper objective, the lower objective, first
//! derivatives, optional curvature oracles (Hessian-vector products of the
//! lower objective), and the two feasible boxes. Problems are immutable after
//! construction and all evaluations are pure.

mod hyperclean;
mod lq;
mod quadratic;
mod sine;

pub use hyperclean::{synthetic_hyperclean, HypercleanConfig, SyntheticHyperclean};
pub use lq::{lq_penalty, lq_penalty_grad, LqConfig};
pub use quadratic::{convex_quadratic, ConvexQuadratic};
pub use sine::{nonconvex_sine, NonconvexSine};

use crate::boxset::BoxSet;
use crate::vector::Vector;

/// Exact solution triple, when one is known in closed form.
#[derive(Clone, Debug)]
pub struct KnownOptimum {
    pub x: Vector,
    pub y: Vector,
    pub upper_value: f64,
}

pub trait BilevelProblem: Send + Sync {
    fn name(&self) -> &'static str;

    /// Upper-level dimension n.
    fn upper_dim(&self) -> usize;
    /// Lower-level dimension m.
    fn lower_dim(&self) -> usize;

    fn upper_box(&self) -> &BoxSet;
    fn lower_box(&self) -> &BoxSet;

    /// Upper objective F(x, y).
    fn upper_objective(&self, x: &Vector, y: &Vector) -> f64;
    /// Lower objective f(x, y).
    fn lower_objective(&self, x: &Vector, y: &Vector) -> f64;

    fn grad_x_upper(&self, x: &Vector, y: &Vector) -> Vector;
    fn grad_y_upper(&self, x: &Vector, y: &Vector) -> Vector;
    fn grad_y_lower(&self, x: &Vector, y: &Vector) -> Vector;

    /// ∇²_yy f(x,y) · v, when an analytic oracle exists.
    fn hvp_yy_lower(&self, _x: &Vector, _y: &Vector, _v: &Vector) -> Option<Vector> {
        None
    }

    /// (∂/∂x ∇_y f(x,y))ᵀ · v ∈ Rⁿ, when an analytic oracle exists.
    fn hvp_xy_lower(&self, _x: &Vector, _y: &Vector, _v: &Vector) -> Option<Vector> {
        None
    }

    /// Lipschitz bound on ∇_y f with respect to y, when known.
    fn lipschitz_grad_lower(&self) -> Option<f64> {
        None
    }

    fn known_optimum(&self) -> Option<KnownOptimum> {
        None
    }

    /// Analytic range (min, max) of f over the feasible product box, when known.
    fn lower_objective_range(&self) -> Option<(f64, f64)> {
        None
    }

    /// Analytic optimal value f*(x) = min_y f(x, y), when known.
    fn lower_optimal_value(&self, _x: &Vector) -> Option<f64> {
        None
    }
}

/// Central finite differences of a scalar function, one coordinate at a time.
pub fn fd_grad(f: impl Fn(&Vector) -> f64, at: &Vector, h: f64) -> Vector {
    let mut vals = at.as_slice().to_vec();
    Vector::from_fn(at.dim(), |i| {
        let orig = vals[i];
        vals[i] = orig + h;
        let fp = f(&Vector::from_slice(&vals));
        vals[i] = orig - h;
        let fm = f(&Vector::from_slice(&vals));
        vals[i] = orig;
        (fp - fm) / (2.0 * h)
    })
}

/// Relative discrepancy used by gradient-consistency checks:
/// max_i |a_i − b_i| / (1 + max(‖a‖, ‖b‖)).
pub fn rel_discrepancy(a: &Vector, b: &Vector) -> f64 {
    let scale = 1.0 + a.norm().max(b.norm());
    (a - b).norm_inf() / scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn interior_sample(rng: &mut SplitMix64, b: &BoxSet, margin: f64) -> Vector {
        Vector::from_fn(b.dim(), |i| {
            let lo = b.lower()[i].max(-10.0);
            let hi = b.upper()[i].min(10.0);
            rng.uniform(lo + margin * (hi - lo), hi - margin * (hi - lo))
        })
    }

    /// Gradient consistency for every catalog problem: central finite
    /// differences of the objectives match the analytic gradients at random
    /// interior points.
    #[test]
    fn catalog_gradients_match_finite_differences() {
        let problems: Vec<Box<dyn BilevelProblem>> = vec![
            Box::new(nonconvex_sine()),
            Box::new(convex_quadratic(3).unwrap()),
            Box::new(
                synthetic_hyperclean(&HypercleanConfig {
                    n_train: 12,
                    n_val: 8,
                    n_features: 4,
                    n_classes: 3,
                    corrupt_fraction: 0.25,
                    n_hidden: 0,
                    seed: 7,
                })
                .unwrap(),
            ),
            Box::new(
                synthetic_hyperclean(&HypercleanConfig {
                    n_train: 10,
                    n_val: 6,
                    n_features: 4,
                    n_classes: 3,
                    corrupt_fraction: 0.2,
                    n_hidden: 5,
                    seed: 11,
                })
                .unwrap(),
            ),
        ];
        let mut rng = SplitMix64::new(2024);
        for p in &problems {
            let trials = 100;
            for _ in 0..trials {
                let x = interior_sample(&mut rng, p.upper_box(), 0.05);
                let y = interior_sample(&mut rng, p.lower_box(), 0.05);
                let h = 1e-5;

                let g = p.grad_y_lower(&x, &y);
                let fd = fd_grad(|yy| p.lower_objective(&x, yy), &y, h);
                assert!(
                    rel_discrepancy(&g, &fd) < 1e-5,
                    "{}: grad_y_lower mismatch {:e}",
                    p.name(),
                    rel_discrepancy(&g, &fd)
                );

                let g = p.grad_y_upper(&x, &y);
                let fd = fd_grad(|yy| p.upper_objective(&x, yy), &y, h);
                assert!(
                    rel_discrepancy(&g, &fd) < 1e-5,
                    "{}: grad_y_upper mismatch",
                    p.name()
                );

                let g = p.grad_x_upper(&x, &y);
                let fd = fd_grad(|xx| p.upper_objective(xx, &y), &x, h);
                assert!(
                    rel_discrepancy(&g, &fd) < 1e-5,
                    "{}: grad_x_upper mismatch",
                    p.name()
                );
            }
        }
    }

    /// Analytic curvature oracles, when present, match finite differences of
    /// the lower gradient.
    #[test]
    fn catalog_hvp_oracles_match_finite_differences() {
        let problems: Vec<Box<dyn BilevelProblem>> =
            vec![Box::new(nonconvex_sine()), Box::new(convex_quadratic(4).unwrap())];
        let mut rng = SplitMix64::new(99);
        for p in &problems {
            for _ in 0..50 {
                let x = interior_sample(&mut rng, p.upper_box(), 0.05);
                let y = interior_sample(&mut rng, p.lower_box(), 0.05);
                let v = Vector::from_fn(p.lower_dim(), |_| rng.uniform(-1.0, 1.0));
                let h = 1e-6 * (1.0 + y.norm()) / v.norm().max(1e-12);

                if let Some(hv) = p.hvp_yy_lower(&x, &y, &v) {
                    let gp = p.grad_y_lower(&x, &y.axpy(h, &v));
                    let gm = p.grad_y_lower(&x, &y.axpy(-h, &v));
                    let fd = (&gp - &gm).scale(1.0 / (2.0 * h));
                    assert!(
                        rel_discrepancy(&hv, &fd) < 1e-4,
                        "{}: hvp_yy mismatch {:e}",
                        p.name(),
                        rel_discrepancy(&hv, &fd)
                    );
                }

                if let Some(hv) = p.hvp_xy_lower(&x, &y, &v) {
                    // (∂_x ∇_y f)ᵀ v = ∇_x (vᵀ ∇_y f); finite-difference each x coordinate.
                    let fd = fd_grad(|xx| v.dot(&p.grad_y_lower(xx, &y)), &x, 1e-5);
                    assert!(
                        rel_discrepancy(&hv, &fd) < 1e-4,
                        "{}: hvp_xy mismatch {:e}",
                        p.name(),
                        rel_discrepancy(&hv, &fd)
                    );
                }
            }
        }
    }

    /// Sampled Lipschitz check of ∇_y f when a constant is declared.
    #[test]
    fn declared_lipschitz_bounds_hold_on_samples() {
        let problems: Vec<Box<dyn BilevelProblem>> =
            vec![Box::new(nonconvex_sine()), Box::new(convex_quadratic(3).unwrap())];
        let mut rng = SplitMix64::new(5);
        for p in &problems {
            let lf = p.lipschitz_grad_lower().unwrap();
            for _ in 0..200 {
                let x = interior_sample(&mut rng, p.upper_box(), 0.0);
                let y1 = interior_sample(&mut rng, p.lower_box(), 0.0);
                let y2 = interior_sample(&mut rng, p.lower_box(), 0.0);
                let dg = (&p.grad_y_lower(&x, &y1) - &p.grad_y_lower(&x, &y2)).norm();
                let dy = (&y1 - &y2).norm();
                assert!(
                    dg <= lf * dy * (1.0 + 1e-12) + 1e-12,
                    "{}: Lipschitz violation {dg} > {lf} * {dy}",
                    p.name()
                );
            }
        }
    }
}
