//! Forward generation of lower-level trajectories with full records, plus the
//! per-step adjoint transition each dynamics exposes for reverse-mode
//! hypergradients.
//!
//! Two dynamics are provided: projected gradient descent
//! y_{k+1} = Proj_Y(y_k − α_k ∇_y f(x, y_k)) started from the trainable
//! initialization z, and its accelerated variant with momentum look-ahead
//! points. Records store every iterate, every pre-projection point (so adjoint
//! masks come from the exact forward arguments rather than a re-evaluation),
//! and the upper-objective value along the trajectory.

use crate::boxset::DEFAULT_ACTIVE_TOL;
use crate::error::{Error, Result};
use crate::hypergrad::{apply_hvp_xy, apply_hvp_yy, HvpPolicy};
use crate::problems::BilevelProblem;
use crate::vector::Vector;

#[derive(Clone, Debug, PartialEq)]
pub enum StepSchedule {
    Constant(f64),
    PerStep(Vec<f64>),
}

impl StepSchedule {
    pub fn constant(alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::invalid(format!("step size must be positive, got {alpha}")));
        }
        Ok(StepSchedule::Constant(alpha))
    }

    pub fn per_step(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("per-step schedule must be nonempty"));
        }
        if values.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(Error::invalid("per-step schedule entries must be positive"));
        }
        Ok(StepSchedule::PerStep(values))
    }

    pub fn alpha(&self, k: usize) -> f64 {
        match self {
            StepSchedule::Constant(a) => *a,
            StepSchedule::PerStep(v) => v[k],
        }
    }

    /// Smallest step in the schedule; residuals in the theory checks are
    /// evaluated at this value.
    pub fn lo(&self) -> f64 {
        match self {
            StepSchedule::Constant(a) => *a,
            StepSchedule::PerStep(v) => v.iter().cloned().fold(f64::INFINITY, f64::min),
        }
    }

    pub fn hi(&self) -> f64 {
        match self {
            StepSchedule::Constant(a) => *a,
            StepSchedule::PerStep(v) => v.iter().cloned().fold(0.0, f64::max),
        }
    }

    fn check_len(&self, k_steps: usize) -> Result<()> {
        if let StepSchedule::PerStep(v) = self {
            if v.len() < k_steps {
                return Err(Error::invalid(format!(
                    "schedule provides {} steps, {} required",
                    v.len(),
                    k_steps
                )));
            }
        }
        Ok(())
    }

    /// Whether the whole schedule sits inside (0, 2/L), the window the
    /// descent-based residual bounds require.
    pub fn within_descent_window(&self, lipschitz: f64) -> bool {
        self.hi() < 2.0 / lipschitz
    }
}

/// Momentum coefficient recursion for the accelerated dynamics.
///
/// `Standard` is the usual accelerated-method rule
/// t_{k+1} = (1 + √(1 + 4t_k²))/2. `Damped` replaces 4t_k² by t_k², which
/// keeps the momentum factor bounded away from 1; it is provided for
/// comparison runs and carries no rate guarantee.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MomentumRule {
    Standard,
    Damped,
}

impl MomentumRule {
    fn next(&self, t: f64) -> f64 {
        match self {
            MomentumRule::Standard => (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0,
            MomentumRule::Damped => (1.0 + (1.0 + t * t).sqrt()) / 2.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DynamicsKind {
    ProjectedGradient,
    Accelerated,
}

/// Momentum state stored alongside an accelerated trajectory: the look-ahead
/// points gradients were evaluated at, and the momentum scalars.
#[derive(Clone, Debug)]
pub struct MomentumAux {
    /// u_0 .. u_{K-1}
    pub lookaheads: Vec<Vector>,
    /// t_0 .. t_K
    pub coefficients: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct TrajectoryRecord {
    /// y_0 .. y_K, all inside the lower box.
    pub iterates: Vec<Vector>,
    /// Arguments of each projection, w_0 .. w_{K-1}.
    pub pre_projection: Vec<Vector>,
    /// Projection-Jacobian diagonals at each w_k.
    pub masks: Vec<Vector>,
    /// Momentum state for accelerated records.
    pub aux: Option<MomentumAux>,
    /// F(x, y_k) for k = 1..K.
    pub upper_values: Vec<f64>,
    pub schedule: StepSchedule,
    pub kind: DynamicsKind,
}

impl TrajectoryRecord {
    /// Number of steps K (iterates holds K+1 entries).
    pub fn k_steps(&self) -> usize {
        self.pre_projection.len()
    }

    pub fn initialization(&self) -> &Vector {
        &self.iterates[0]
    }

    pub fn final_iterate(&self) -> &Vector {
        &self.iterates[self.k_steps()]
    }

    /// Step size used at step k (for accelerated records the single α).
    pub fn alpha(&self, k: usize) -> f64 {
        self.schedule.alpha(k)
    }

    /// True when no coordinate was clamped at any step.
    pub fn all_interior(&self) -> bool {
        self.masks
            .iter()
            .all(|m| m.iter().all(|v| *v == 1.0))
    }
}

fn checked_gradient(
    problem: &dyn BilevelProblem,
    x: &Vector,
    at: &Vector,
    step: usize,
) -> Result<Vector> {
    let g = problem.grad_y_lower(x, at);
    if !g.is_finite() {
        return Err(Error::NumericalFailure {
            step,
            detail: "non-finite lower gradient".into(),
        });
    }
    Ok(g)
}

fn checked_upper(problem: &dyn BilevelProblem, x: &Vector, y: &Vector, step: usize) -> Result<f64> {
    let v = problem.upper_objective(x, y);
    if !v.is_finite() {
        return Err(Error::NumericalFailure {
            step,
            detail: "non-finite upper objective along trajectory".into(),
        });
    }
    Ok(v)
}

/// Projected gradient descent from initialization z, recording everything the
/// adjoint sweep needs. z is projected into the lower box first; in-solver
/// calls always pass feasible z, standalone calls get the forgiving behavior.
pub fn pgd_forward(
    problem: &dyn BilevelProblem,
    x: &Vector,
    z: &Vector,
    k_steps: usize,
    schedule: &StepSchedule,
) -> Result<TrajectoryRecord> {
    if k_steps == 0 {
        return Err(Error::invalid("at least one inner step is required"));
    }
    x.check_dim(problem.upper_dim())?;
    z.check_dim(problem.lower_dim())?;
    schedule.check_len(k_steps)?;
    let lower_box = problem.lower_box();

    let y0 = lower_box.project(z)?;
    let mut iterates = Vec::with_capacity(k_steps + 1);
    let mut pre_projection = Vec::with_capacity(k_steps);
    let mut masks = Vec::with_capacity(k_steps);
    let mut upper_values = Vec::with_capacity(k_steps);
    iterates.push(y0);

    for k in 0..k_steps {
        let y = &iterates[k];
        let g = checked_gradient(problem, x, y, k)?;
        let w = y.axpy(-schedule.alpha(k), &g);
        let mask = lower_box.active_mask(&w, DEFAULT_ACTIVE_TOL)?;
        let y_next = lower_box.project(&w)?;
        upper_values.push(checked_upper(problem, x, &y_next, k)?);
        pre_projection.push(w);
        masks.push(mask);
        iterates.push(y_next);
    }

    Ok(TrajectoryRecord {
        iterates,
        pre_projection,
        masks,
        aux: None,
        upper_values,
        schedule: schedule.clone(),
        kind: DynamicsKind::ProjectedGradient,
    })
}

/// Accelerated proximal-gradient dynamics with momentum look-ahead.
///
/// With `alpha = None` the step defaults to 1/L when the problem declares a
/// Lipschitz constant, the choice the convergence-rate analysis assumes.
pub fn nesterov_forward(
    problem: &dyn BilevelProblem,
    x: &Vector,
    z: &Vector,
    k_steps: usize,
    alpha: Option<f64>,
    rule: MomentumRule,
) -> Result<TrajectoryRecord> {
    if k_steps == 0 {
        return Err(Error::invalid("at least one inner step is required"));
    }
    x.check_dim(problem.upper_dim())?;
    z.check_dim(problem.lower_dim())?;
    let alpha = match alpha {
        Some(a) if a.is_finite() && a > 0.0 => a,
        Some(a) => return Err(Error::invalid(format!("step size must be positive, got {a}"))),
        None => match problem.lipschitz_grad_lower() {
            Some(l) => 1.0 / l,
            None => {
                return Err(Error::invalid(
                    "no step size given and the problem declares no Lipschitz constant",
                ))
            }
        },
    };
    let lower_box = problem.lower_box();

    let y0 = lower_box.project(z)?;
    let mut iterates = Vec::with_capacity(k_steps + 1);
    let mut pre_projection = Vec::with_capacity(k_steps);
    let mut masks = Vec::with_capacity(k_steps);
    let mut upper_values = Vec::with_capacity(k_steps);
    let mut lookaheads = Vec::with_capacity(k_steps);
    let mut coefficients = Vec::with_capacity(k_steps + 1);
    iterates.push(y0.clone());
    lookaheads.push(y0);
    coefficients.push(1.0);

    for k in 0..k_steps {
        let u = lookaheads[k].clone();
        let g = checked_gradient(problem, x, &u, k)?;
        let w = u.axpy(-alpha, &g);
        let mask = lower_box.active_mask(&w, DEFAULT_ACTIVE_TOL)?;
        let y_next = lower_box.project(&w)?;
        let t_next = rule.next(coefficients[k]);
        if k + 1 < k_steps {
            let gamma = (coefficients[k] - 1.0) / t_next;
            let diff = &y_next - &iterates[k];
            lookaheads.push(y_next.axpy(gamma, &diff));
        }
        coefficients.push(t_next);
        upper_values.push(checked_upper(problem, x, &y_next, k)?);
        pre_projection.push(w);
        masks.push(mask);
        iterates.push(y_next);
    }

    Ok(TrajectoryRecord {
        iterates,
        pre_projection,
        masks,
        aux: Some(MomentumAux {
            lookaheads,
            coefficients,
        }),
        upper_values,
        schedule: StepSchedule::Constant(alpha),
        kind: DynamicsKind::Accelerated,
    })
}

/// Adjoint carried backward through a trajectory.
///
/// Plain records carry one vector (the adjoint of y_{k+1}); accelerated
/// records carry a two-slot state: the total adjoint of y_{k+1} and the
/// partial adjoint of y_k accumulated so far.
#[derive(Clone, Debug)]
pub enum AdjointState {
    Chain(Vector),
    Pair(Vector, Vector),
}

impl AdjointState {
    pub fn seed(record: &TrajectoryRecord, p: Vector) -> AdjointState {
        match record.kind {
            DynamicsKind::ProjectedGradient => AdjointState::Chain(p),
            DynamicsKind::Accelerated => {
                let zero = Vector::zeros(p.dim());
                AdjointState::Pair(p, zero)
            }
        }
    }

    /// Gradient with respect to the initialization once the sweep has folded
    /// down through step 0.
    pub fn into_initialization_grad(self) -> Vector {
        match self {
            AdjointState::Chain(p) => p,
            AdjointState::Pair(a, b) => &a + &b,
        }
    }
}

/// One backward transition through step k of a recorded trajectory.
///
/// Returns the adjoint for the next (lower) step and the increment this step
/// contributes to the upper-variable gradient.
pub fn adjoint_step(
    problem: &dyn BilevelProblem,
    x: &Vector,
    record: &TrajectoryRecord,
    k: usize,
    state: AdjointState,
    policy: &HvpPolicy,
) -> Result<(AdjointState, Vector)> {
    if k >= record.k_steps() {
        return Err(Error::invalid(format!(
            "step index {k} out of range for a {}-step record",
            record.k_steps()
        )));
    }
    let alpha = record.alpha(k);
    let n = problem.upper_dim();

    match (record.kind, state) {
        (DynamicsKind::ProjectedGradient, AdjointState::Chain(p)) => {
            let q = record.masks[k].hadamard(&p);
            if q.iter().all(|v| *v == 0.0) {
                // clamped coordinates block all adjoint flow
                return Ok((AdjointState::Chain(q), Vector::zeros(n)));
            }
            let at = &record.iterates[k];
            let x_inc = apply_hvp_xy(problem, x, at, &q, policy)?.scale(-alpha);
            let hq = apply_hvp_yy(problem, x, at, &q, policy)?;
            let p_next = q.axpy(-alpha, &hq);
            Ok((AdjointState::Chain(p_next), x_inc))
        }
        (DynamicsKind::Accelerated, AdjointState::Pair(a_next, a_curr)) => {
            let aux = record.aux.as_ref().expect("accelerated record carries aux");
            let q = record.masks[k].hadamard(&a_next);
            let (c, x_inc) = if q.iter().all(|v| *v == 0.0) {
                (q, Vector::zeros(n))
            } else {
                let at = &aux.lookaheads[k];
                let x_inc = apply_hvp_xy(problem, x, at, &q, policy)?.scale(-alpha);
                let hq = apply_hvp_yy(problem, x, at, &q, policy)?;
                (q.axpy(-alpha, &hq), x_inc)
            };
            if k >= 1 {
                let gamma = (aux.coefficients[k - 1] - 1.0) / aux.coefficients[k];
                let new_next = a_curr.axpy(1.0 + gamma, &c);
                let new_curr = c.scale(-gamma);
                Ok((AdjointState::Pair(new_next, new_curr), x_inc))
            } else {
                // u_0 = y_0 = z: both slots now feed the initialization
                Ok((AdjointState::Pair(a_curr.axpy(1.0, &c), Vector::zeros(c.dim())), x_inc))
            }
        }
        _ => Err(Error::invalid(
            "adjoint state kind does not match the record's dynamics",
        )),
    }
}
