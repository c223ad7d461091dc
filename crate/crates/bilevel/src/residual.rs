//! Proximal-gradient residual mapping.
//!
//! R_α(x, y) = y − Proj_Y(y − α ∇_y f(x, y)). Its norm is zero exactly at the
//! stationary points of the box-constrained lower problem, so it serves as the
//! optimality measurement everywhere in the theory checks. When the lower box
//! is the whole space it reduces to α ∇_y f(x, y).

use crate::error::{Error, Result};
use crate::problems::BilevelProblem;
use crate::vector::Vector;

#[derive(Clone, Debug)]
pub struct Residual {
    value: Vector,
    norm: f64,
    alpha: f64,
}

impl Residual {
    pub fn value(&self) -> &Vector {
        &self.value
    }

    /// Euclidean norm of the residual vector.
    pub fn norm(&self) -> f64 {
        self.norm
    }

    /// Step size the residual was evaluated at.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

pub fn residual(
    problem: &dyn BilevelProblem,
    x: &Vector,
    y: &Vector,
    alpha: f64,
) -> Result<Residual> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::invalid(format!("step size must be positive, got {alpha}")));
    }
    x.check_dim(problem.upper_dim())?;
    y.check_dim(problem.lower_dim())?;
    let feas_tol = 1e-9 * (1.0 + y.norm());
    if !problem.lower_box().contains(y, feas_tol) {
        return Err(Error::invalid(
            "y lies outside the lower feasible box beyond tolerance",
        ));
    }

    let g = problem.grad_y_lower(x, y);
    if !g.is_finite() {
        return Err(Error::NumericalFailure {
            step: 0,
            detail: "non-finite lower gradient in residual evaluation".into(),
        });
    }
    let stepped = y.axpy(-alpha, &g);
    let projected = problem.lower_box().project(&stepped)?;
    let value = y - &projected;
    let norm = value.norm();
    Ok(Residual { value, norm, alpha })
}
