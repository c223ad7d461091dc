//! Outer optimization loops over a shared run-state and logging contract.
//!
//! The reference method alternates three moves per outer step: run the inner
//! dynamics from the trainable initialization, truncate the trajectory
//! pessimistically at the iterate with the worst (largest) upper objective,
//! then take projected gradient steps on both the upper variable and the
//! initialization through that truncated iterate. The comparison methods
//! substitute pieces of this loop: no truncation, accelerated inner dynamics,
//! a frozen initialization, truncated back-propagation, an aggregated inner
//! direction, or implicit hypergradients at the final iterate.

use std::time::Instant;

use crate::boxset::BoxSet;
use crate::dynamics::{nesterov_forward, pgd_forward, MomentumRule, StepSchedule};
use crate::error::{Error, Result};
use crate::hypergrad::{
    adjoint_sweep, implicit_ls, implicit_ns, unrolled_reverse, HvpPolicy, HyperGradient,
    HypergradMethod,
};
use crate::problems::{BilevelProblem, KnownOptimum};
use crate::residual::residual;
use crate::vector::Vector;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MethodKind {
    /// Trainable initialization + pessimistic truncation.
    IapttGm,
    /// Trainable initialization, no truncation (k̄ = K).
    IaGm,
    /// Trainable initialization with accelerated inner dynamics, k̄ = K.
    IaGmAccel,
    /// Reverse-mode through the full trajectory, frozen initialization.
    Rhg,
    /// As Rhg with back-propagation truncated to the last few steps.
    TRhg,
    /// Inner updates follow an aggregate of upper and lower gradients.
    Bda,
    /// Implicit hypergradient via a linear solve at y_K.
    ImplicitLs,
    /// Implicit hypergradient via a truncated series at y_K.
    ImplicitNs,
}

impl MethodKind {
    pub fn label(&self) -> &'static str {
        match self {
            MethodKind::IapttGm => "iaptt-gm",
            MethodKind::IaGm => "ia-gm",
            MethodKind::IaGmAccel => "ia-gm-a",
            MethodKind::Rhg => "rhg",
            MethodKind::TRhg => "t-rhg",
            MethodKind::Bda => "bda",
            MethodKind::ImplicitLs => "implicit-ls",
            MethodKind::ImplicitNs => "implicit-ns",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "iaptt-gm" => MethodKind::IapttGm,
            "ia-gm" => MethodKind::IaGm,
            "ia-gm-a" => MethodKind::IaGmAccel,
            "rhg" => MethodKind::Rhg,
            "t-rhg" => MethodKind::TRhg,
            "bda" => MethodKind::Bda,
            "implicit-ls" => MethodKind::ImplicitLs,
            "implicit-ns" => MethodKind::ImplicitNs,
            other => return Err(Error::invalid(format!("unknown method '{other}'"))),
        })
    }

    pub fn all() -> [MethodKind; 8] {
        [
            MethodKind::IapttGm,
            MethodKind::IaGm,
            MethodKind::IaGmAccel,
            MethodKind::Rhg,
            MethodKind::TRhg,
            MethodKind::Bda,
            MethodKind::ImplicitLs,
            MethodKind::ImplicitNs,
        ]
    }

    /// Whether the method optimizes the inner initialization.
    pub fn updates_initialization(&self) -> bool {
        matches!(
            self,
            MethodKind::IapttGm | MethodKind::IaGm | MethodKind::IaGmAccel
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OuterOptimizer {
    ProjectedGradient,
    /// Adaptive-moment steps with projection applied after the step.
    AdaptiveMoment,
}

#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub method: MethodKind,
    /// Outer iterations T.
    pub outer_iters: usize,
    /// Inner iterations K.
    pub inner_iters: usize,
    pub inner_schedule: StepSchedule,
    pub alpha_x: f64,
    pub alpha_z: f64,
    /// Back-propagation window for TRhg.
    pub truncate_at: Option<usize>,
    /// Aggregation ratio for Bda.
    pub mu: Option<f64>,
    pub outer_optimizer: OuterOptimizer,
    pub seed: u64,
    pub momentum_rule: MomentumRule,
    pub cg_tol: f64,
    /// None resolves to 10·m at run time.
    pub cg_maxiter: Option<usize>,
    /// None resolves to 1/L when known, otherwise the inner step size.
    pub neumann_alpha: Option<f64>,
    pub neumann_terms: usize,
}

impl SolverConfig {
    /// Defaults matching the non-convex experiment settings: 500 outer steps,
    /// 40 inner steps at rate 5e-4, outer rates 0.1.
    pub fn new(method: MethodKind) -> Self {
        Self {
            method,
            outer_iters: 500,
            inner_iters: 40,
            inner_schedule: StepSchedule::Constant(5e-4),
            alpha_x: 0.1,
            alpha_z: 0.1,
            truncate_at: None,
            mu: None,
            outer_optimizer: OuterOptimizer::ProjectedGradient,
            seed: 0,
            momentum_rule: MomentumRule::Standard,
            cg_tol: 1e-10,
            cg_maxiter: None,
            neumann_alpha: None,
            neumann_terms: 20,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.outer_iters == 0 || self.inner_iters == 0 {
            return Err(Error::invalid("outer and inner iteration counts must be positive"));
        }
        for (name, v) in [("alpha_x", self.alpha_x), ("alpha_z", self.alpha_z)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if let Some(mu) = self.mu {
            if !(0.0..1.0).contains(&mu) {
                return Err(Error::invalid(format!("mu must lie in (0,1), got {mu}")));
            }
        }
        match self.method {
            MethodKind::TRhg if self.truncate_at.is_none_or(|t| t == 0) => {
                Err(Error::invalid("t-rhg requires truncate_at >= 1"))
            }
            MethodKind::Bda if self.mu.is_none() => {
                Err(Error::invalid("bda requires the aggregation ratio mu"))
            }
            MethodKind::IaGmAccel
                if !matches!(self.inner_schedule, StepSchedule::Constant(_)) =>
            {
                Err(Error::invalid(
                    "accelerated dynamics use a single constant step size",
                ))
            }
            _ => Ok(()),
        }
    }
}

/// One row of the per-outer-step log.
#[derive(Clone, Debug)]
pub struct IterateLog {
    pub t: usize,
    pub upper_value: f64,
    /// ‖x − x*‖ / ‖x*‖ when a known optimum exists.
    pub x_rel_err: Option<f64>,
    /// |F − F*| / |F*| when a known optimum with nonzero value exists.
    pub upper_rel_err: Option<f64>,
    pub k_bar: usize,
    pub grad_norm_x: f64,
    pub grad_norm_z: f64,
    /// Wall-clock milliseconds since the run started. Reported, never asserted.
    pub wall_millis: u64,
    /// Residual norm at the selected iterate, evaluated at the schedule's
    /// smallest step.
    pub residual_at_selected: f64,
}

#[derive(Clone, Debug)]
pub struct RunState {
    pub x: Vector,
    pub z: Vector,
    pub outer_steps: usize,
    pub last_k_bar: usize,
    /// Selected inner iterate y_k̄ at the final outer step.
    pub final_selected_iterate: Vector,
    pub logs: Vec<IterateLog>,
    pub method: MethodKind,
}

/// Smallest index attaining the maximum of the per-iterate upper values
/// (1-based, matching the trajectory indices y_1..y_K). Ties break to the
/// smallest index: the cheapest back-propagation and a deterministic rule.
pub fn ptt_select(upper_values: &[f64]) -> Result<usize> {
    if upper_values.is_empty() {
        return Err(Error::invalid("cannot select from an empty value sequence"));
    }
    let mut best = 0;
    for (i, v) in upper_values.iter().enumerate() {
        if *v > upper_values[best] {
            best = i;
        }
    }
    Ok(best + 1)
}

/// Arithmetic mean of the selected truncation index over a logged run.
pub fn average_k_bar(state: &RunState) -> Result<f64> {
    if state.method != MethodKind::IapttGm {
        return Err(Error::invalid(
            "average truncation index is defined for iaptt-gm runs",
        ));
    }
    if state.logs.is_empty() {
        return Err(Error::invalid("run has no logged steps"));
    }
    Ok(state.logs.iter().map(|l| l.k_bar as f64).sum::<f64>() / state.logs.len() as f64)
}

/// Lower problem with the aggregated inner direction μ∇_y F + (1−μ)∇_y f;
/// everything else passes through. At μ = 0 evaluation is bit-identical to
/// the base problem.
struct AggregatedLower<'a> {
    base: &'a dyn BilevelProblem,
    mu: f64,
}

impl BilevelProblem for AggregatedLower<'_> {
    fn name(&self) -> &'static str {
        "aggregated-lower"
    }
    fn upper_dim(&self) -> usize {
        self.base.upper_dim()
    }
    fn lower_dim(&self) -> usize {
        self.base.lower_dim()
    }
    fn upper_box(&self) -> &BoxSet {
        self.base.upper_box()
    }
    fn lower_box(&self) -> &BoxSet {
        self.base.lower_box()
    }
    fn upper_objective(&self, x: &Vector, y: &Vector) -> f64 {
        self.base.upper_objective(x, y)
    }
    fn lower_objective(&self, x: &Vector, y: &Vector) -> f64 {
        if self.mu == 0.0 {
            return self.base.lower_objective(x, y);
        }
        self.mu * self.base.upper_objective(x, y)
            + (1.0 - self.mu) * self.base.lower_objective(x, y)
    }
    fn grad_x_upper(&self, x: &Vector, y: &Vector) -> Vector {
        self.base.grad_x_upper(x, y)
    }
    fn grad_y_upper(&self, x: &Vector, y: &Vector) -> Vector {
        self.base.grad_y_upper(x, y)
    }
    fn grad_y_lower(&self, x: &Vector, y: &Vector) -> Vector {
        if self.mu == 0.0 {
            return self.base.grad_y_lower(x, y);
        }
        self.base
            .grad_y_lower(x, y)
            .scale(1.0 - self.mu)
            .axpy(self.mu, &self.base.grad_y_upper(x, y))
    }
    // no curvature oracles: the adjoint falls back to finite differences
}

struct AdamState {
    m: Vector,
    v: Vector,
    count: u32,
}

impl AdamState {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(dim: usize) -> Self {
        Self {
            m: Vector::zeros(dim),
            v: Vector::zeros(dim),
            count: 0,
        }
    }

    fn direction(&mut self, g: &Vector) -> Vector {
        self.count += 1;
        self.m = self.m.scale(Self::BETA1).axpy(1.0 - Self::BETA1, g);
        self.v = Vector::from_fn(g.dim(), |i| {
            Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * g[i] * g[i]
        });
        let bc1 = 1.0 - Self::BETA1.powi(self.count as i32);
        let bc2 = 1.0 - Self::BETA2.powi(self.count as i32);
        Vector::from_fn(g.dim(), |i| {
            (self.m[i] / bc1) / ((self.v[i] / bc2).sqrt() + Self::EPS)
        })
    }
}

/// Run the reference method. The config's method must be `IapttGm`.
pub fn run_iaptt_gm(
    problem: &dyn BilevelProblem,
    config: &SolverConfig,
    x0: &Vector,
    z0: &Vector,
) -> Result<RunState> {
    if config.method != MethodKind::IapttGm {
        return Err(Error::invalid(format!(
            "run_iaptt_gm called with method '{}'",
            config.method.label()
        )));
    }
    run_variant(problem, config, x0, z0)
}

/// Run any catalog method over the shared loop and logging contract.
pub fn run_variant(
    problem: &dyn BilevelProblem,
    config: &SolverConfig,
    x0: &Vector,
    z0: &Vector,
) -> Result<RunState> {
    config.validate()?;
    x0.check_dim(problem.upper_dim())?;
    z0.check_dim(problem.lower_dim())?;

    let upper_box = problem.upper_box();
    let lower_box = problem.lower_box();
    let mut x = upper_box.project(x0)?;
    let mut z = lower_box.project(z0)?;

    let method = config.method;
    let k_steps = config.inner_iters;
    let policy = match method {
        MethodKind::Bda => HvpPolicy::finite_difference(),
        _ => HvpPolicy::for_problem(problem),
    };
    let known = problem.known_optimum();
    let cg_maxiter = config
        .cg_maxiter
        .unwrap_or(10 * problem.lower_dim().max(1));
    let neumann_alpha = config.neumann_alpha.unwrap_or_else(|| {
        problem
            .lipschitz_grad_lower()
            .map(|l| 1.0 / l)
            .unwrap_or_else(|| config.inner_schedule.lo())
    });

    let mut adam_x = AdamState::new(problem.upper_dim());
    let mut adam_z = AdamState::new(problem.lower_dim());
    let started = Instant::now();
    let mut logs = Vec::with_capacity(config.outer_iters);
    let mut last_k_bar = 0;
    let mut final_selected = z.clone();

    for t in 0..config.outer_iters {
        let outcome = outer_step(
            problem,
            config,
            &policy,
            &x,
            &z,
            k_steps,
            cg_maxiter,
            neumann_alpha,
        )
        .map_err(|e| e.at_outer_step(t))?;

        last_k_bar = outcome.k_bar;
        final_selected = outcome.selected_iterate;
        logs.push(IterateLog {
            t,
            upper_value: outcome.upper_value,
            x_rel_err: known.as_ref().and_then(|o| rel_vec_err(&x, &o.x)),
            upper_rel_err: known
                .as_ref()
                .and_then(|o| rel_val_err(outcome.upper_value, o)),
            k_bar: outcome.k_bar,
            grad_norm_x: outcome.grad.g_x.norm(),
            grad_norm_z: outcome.grad.g_z.norm(),
            wall_millis: started.elapsed().as_millis() as u64,
            residual_at_selected: outcome.residual_at_selected,
        });

        x = apply_update(
            &x,
            &outcome.grad.g_x,
            config.alpha_x,
            config.outer_optimizer,
            &mut adam_x,
            upper_box,
        )?;
        if method.updates_initialization() {
            z = apply_update(
                &z,
                &outcome.grad.g_z,
                config.alpha_z,
                config.outer_optimizer,
                &mut adam_z,
                lower_box,
            )?;
        }
    }

    Ok(RunState {
        x,
        z,
        outer_steps: config.outer_iters,
        last_k_bar,
        final_selected_iterate: final_selected,
        logs,
        method,
    })
}

struct StepOutcome {
    grad: HyperGradient,
    upper_value: f64,
    k_bar: usize,
    residual_at_selected: f64,
    selected_iterate: Vector,
}

#[allow(clippy::too_many_arguments)]
fn outer_step(
    problem: &dyn BilevelProblem,
    config: &SolverConfig,
    policy: &HvpPolicy,
    x: &Vector,
    z: &Vector,
    k_steps: usize,
    cg_maxiter: usize,
    neumann_alpha: f64,
) -> Result<StepOutcome> {
    let method = config.method;
    let aggregated;
    let forward_problem: &dyn BilevelProblem = match method {
        MethodKind::Bda => {
            aggregated = AggregatedLower {
                base: problem,
                mu: config.mu.expect("validated"),
            };
            &aggregated
        }
        _ => problem,
    };

    let record = match method {
        MethodKind::IaGmAccel => {
            let alpha = config.inner_schedule.lo();
            nesterov_forward(problem, x, z, k_steps, Some(alpha), config.momentum_rule)?
        }
        _ => pgd_forward(forward_problem, x, z, k_steps, &config.inner_schedule)?,
    };

    let k_bar = match method {
        MethodKind::IapttGm => ptt_select(&record.upper_values)?,
        _ => k_steps,
    };
    let selected = record.iterates[k_bar].clone();
    let upper_value = record.upper_values[k_bar - 1];
    let residual_at_selected =
        residual(problem, x, &selected, config.inner_schedule.lo())?.norm();

    let grad = match method {
        MethodKind::ImplicitLs => {
            let (hg, _report) = implicit_ls(
                problem,
                x,
                record.final_iterate(),
                config.cg_tol,
                cg_maxiter,
                policy,
            )?;
            hg
        }
        MethodKind::ImplicitNs => {
            let (hg, _report) = implicit_ns(
                problem,
                x,
                record.final_iterate(),
                neumann_alpha,
                config.neumann_terms,
                policy,
            )?;
            hg
        }
        MethodKind::TRhg => {
            let window = config.truncate_at.expect("validated");
            let lowest = k_bar.saturating_sub(window);
            let y_sel = &record.iterates[k_bar];
            let seed = problem.grad_y_upper(x, y_sel);
            let (x_accum, _) =
                adjoint_sweep(forward_problem, x, &record, k_bar, lowest, seed, policy)?;
            let g_x = problem.grad_x_upper(x, y_sel).axpy(1.0, &x_accum);
            HyperGradient {
                g_x,
                g_z: Vector::zeros(problem.lower_dim()),
                k_used: k_bar,
                method: HypergradMethod::Unrolled,
            }
        }
        _ => unrolled_reverse(forward_problem, x, &record, k_bar, policy)?,
    };

    Ok(StepOutcome {
        grad,
        upper_value,
        k_bar,
        residual_at_selected,
        selected_iterate: selected,
    })
}

fn apply_update(
    point: &Vector,
    grad: &Vector,
    rate: f64,
    optimizer: OuterOptimizer,
    adam: &mut AdamState,
    feasible: &BoxSet,
) -> Result<Vector> {
    let stepped = match optimizer {
        OuterOptimizer::ProjectedGradient => point.axpy(-rate, grad),
        OuterOptimizer::AdaptiveMoment => {
            let d = adam.direction(grad);
            point.axpy(-rate, &d)
        }
    };
    feasible.project(&stepped)
}

fn rel_vec_err(x: &Vector, x_star: &Vector) -> Option<f64> {
    let denom = x_star.norm();
    if denom > 0.0 {
        Some((x - x_star).norm() / denom)
    } else {
        None
    }
}

fn rel_val_err(value: f64, opt: &KnownOptimum) -> Option<f64> {
    if opt.upper_value.abs() > 0.0 {
        Some((value - opt.upper_value).abs() / opt.upper_value.abs())
    } else {
        None
    }
}
