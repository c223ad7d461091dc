//! Outer gradients of the truncated objective F(x, y_k̄(x, z)): reverse
//! adjoint sweep over a recorded trajectory, implicit-differentiation
//! baselines, and a brute-force finite-difference oracle that reruns the
//! forward dynamics per perturbation.

use crate::dynamics::{adjoint_step, AdjointState, StepSchedule, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::problems::BilevelProblem;
use crate::vector::Vector;

/// How Hessian-vector products of the lower objective are obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HvpMode {
    /// Require the problem's analytic oracles; error when absent.
    Analytic,
    /// Central differences of the lower gradient, regardless of oracles.
    FiniteDifference,
}

#[derive(Clone, Copy, Debug)]
pub struct HvpPolicy {
    pub mode: HvpMode,
    /// Base step for finite-difference products; the effective step is scaled
    /// by (1 + ‖y‖)/‖v‖.
    pub fd_step: f64,
}

impl Default for HvpPolicy {
    fn default() -> Self {
        Self {
            mode: HvpMode::Analytic,
            fd_step: 1e-6,
        }
    }
}

impl HvpPolicy {
    pub fn finite_difference() -> Self {
        Self {
            mode: HvpMode::FiniteDifference,
            fd_step: 1e-6,
        }
    }

    /// Analytic when the problem carries both curvature oracles, otherwise
    /// finite differences.
    pub fn for_problem(problem: &dyn BilevelProblem) -> Self {
        let probe_x = Vector::zeros(problem.upper_dim());
        let probe_y = Vector::zeros(problem.lower_dim());
        let probe_v = Vector::zeros(problem.lower_dim());
        let has_both = problem.hvp_yy_lower(&probe_x, &probe_y, &probe_v).is_some()
            && problem.hvp_xy_lower(&probe_x, &probe_y, &probe_v).is_some();
        if has_both {
            Self::default()
        } else {
            Self::finite_difference()
        }
    }
}

/// ∇²_yy f(x, y) · v under the given policy.
pub fn apply_hvp_yy(
    problem: &dyn BilevelProblem,
    x: &Vector,
    y: &Vector,
    v: &Vector,
    policy: &HvpPolicy,
) -> Result<Vector> {
    let vn = v.norm();
    if vn == 0.0 {
        return Ok(Vector::zeros(v.dim()));
    }
    match policy.mode {
        HvpMode::Analytic => problem
            .hvp_yy_lower(x, y, v)
            .ok_or(Error::MissingCurvatureOracle),
        HvpMode::FiniteDifference => {
            let s = policy.fd_step * (1.0 + y.norm()) / vn;
            let gp = problem.grad_y_lower(x, &y.axpy(s, v));
            let gm = problem.grad_y_lower(x, &y.axpy(-s, v));
            Ok((&gp - &gm).scale(1.0 / (2.0 * s)))
        }
    }
}

/// (∂_x ∇_y f(x, y))ᵀ · v under the given policy; the result lives in the
/// upper space.
pub fn apply_hvp_xy(
    problem: &dyn BilevelProblem,
    x: &Vector,
    y: &Vector,
    v: &Vector,
    policy: &HvpPolicy,
) -> Result<Vector> {
    if v.norm() == 0.0 {
        return Ok(Vector::zeros(problem.upper_dim()));
    }
    match policy.mode {
        HvpMode::Analytic => problem
            .hvp_xy_lower(x, y, v)
            .ok_or(Error::MissingCurvatureOracle),
        HvpMode::FiniteDifference => {
            // (∂_x ∇_y f)ᵀ v = ∇_x (vᵀ ∇_y f); difference each x coordinate
            let mut xs = x.as_slice().to_vec();
            Ok(Vector::from_fn(x.dim(), |i| {
                let s = policy.fd_step * (1.0 + xs[i].abs());
                let orig = xs[i];
                xs[i] = orig + s;
                let fp = v.dot(&problem.grad_y_lower(&Vector::from_slice(&xs), y));
                xs[i] = orig - s;
                let fm = v.dot(&problem.grad_y_lower(&Vector::from_slice(&xs), y));
                xs[i] = orig;
                (fp - fm) / (2.0 * s)
            }))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HypergradMethod {
    Unrolled,
    ImplicitLinearSolve,
    ImplicitNeumann,
    FiniteDifference,
}

impl HypergradMethod {
    pub fn label(&self) -> &'static str {
        match self {
            HypergradMethod::Unrolled => "unrolled",
            HypergradMethod::ImplicitLinearSolve => "implicit-ls",
            HypergradMethod::ImplicitNeumann => "implicit-ns",
            HypergradMethod::FiniteDifference => "finite-diff",
        }
    }
}

/// The pair of outer gradients of the truncated objective.
#[derive(Clone, Debug)]
pub struct HyperGradient {
    pub g_x: Vector,
    pub g_z: Vector,
    /// Truncation index the gradient was taken at; 0 for implicit methods,
    /// which differentiate a stationarity condition rather than a trajectory.
    pub k_used: usize,
    pub method: HypergradMethod,
}

impl HyperGradient {
    fn checked(g_x: Vector, g_z: Vector, k_used: usize, method: HypergradMethod) -> Result<Self> {
        if !g_x.is_finite() || !g_z.is_finite() {
            return Err(Error::NumericalFailure {
                step: k_used,
                detail: "non-finite hypergradient entries".into(),
            });
        }
        Ok(Self {
            g_x,
            g_z,
            k_used,
            method,
        })
    }
}

/// Fold the adjoint backward from step `k_bar − 1` down to `lowest_k`,
/// starting from the given seed over y_{k̄}.
///
/// Returns the accumulated upper-gradient correction and the adjoint at the
/// sweep's lower end (the initialization gradient when `lowest_k == 0`).
pub fn adjoint_sweep(
    problem: &dyn BilevelProblem,
    x: &Vector,
    record: &TrajectoryRecord,
    k_bar: usize,
    lowest_k: usize,
    seed: Vector,
    policy: &HvpPolicy,
) -> Result<(Vector, Vector)> {
    let mut state = AdjointState::seed(record, seed);
    let mut x_accum = Vector::zeros(problem.upper_dim());
    for k in (lowest_k..k_bar).rev() {
        let (next, inc) = adjoint_step(problem, x, record, k, state, policy)?;
        state = next;
        x_accum = x_accum.axpy(1.0, &inc);
    }
    Ok((x_accum, state.into_initialization_grad()))
}

/// Reverse-mode hypergradient of F(x, y_{k̄}(x, z)) over a recorded
/// trajectory. Sweep cost is linear in k̄, which is the whole point of
/// truncating pessimistically: a small k̄ shortens back-propagation.
pub fn unrolled_reverse(
    problem: &dyn BilevelProblem,
    x: &Vector,
    record: &TrajectoryRecord,
    k_bar: usize,
    policy: &HvpPolicy,
) -> Result<HyperGradient> {
    if k_bar < 1 || k_bar > record.k_steps() {
        return Err(Error::invalid(format!(
            "truncation index {k_bar} outside 1..={}",
            record.k_steps()
        )));
    }
    let y_sel = &record.iterates[k_bar];
    let seed = problem.grad_y_upper(x, y_sel);
    let g_x_direct = problem.grad_x_upper(x, y_sel);
    let (x_accum, g_z) = adjoint_sweep(problem, x, record, k_bar, 0, seed, policy)?;
    HyperGradient::checked(
        g_x_direct.axpy(1.0, &x_accum),
        g_z,
        k_bar,
        HypergradMethod::Unrolled,
    )
}

/// Coordinates whose perturbed forward runs clamped differently from the base
/// run; central differences across such a projection kink are unreliable.
#[derive(Clone, Debug, Default)]
pub struct FdDiagnostics {
    pub suspect_x: Vec<usize>,
    pub suspect_z: Vec<usize>,
}

fn masks_match(a: &TrajectoryRecord, b: &TrajectoryRecord, upto: usize) -> bool {
    a.masks[..upto]
        .iter()
        .zip(b.masks[..upto].iter())
        .all(|(ma, mb)| ma == mb)
}

/// Central-difference oracle for the scalar map (x, z) ↦ F(x, y_{k̄}(x, z)),
/// rerunning the forward dynamics for every perturbation. k̄ is held fixed
/// exogenously, never re-selected per perturbation.
///
/// The perturbed initialization is taken literally (no initial projection), so
/// the differentiated map is exactly the one the reverse sweep linearizes,
/// including at initializations on the feasible boundary.
pub fn fd_hypergrad(
    problem: &dyn BilevelProblem,
    x: &Vector,
    z: &Vector,
    k_steps: usize,
    k_bar: usize,
    schedule: &StepSchedule,
    h: f64,
) -> Result<(HyperGradient, FdDiagnostics)> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::invalid(format!("fd step must be positive, got {h}")));
    }
    if k_bar < 1 || k_bar > k_steps {
        return Err(Error::invalid(format!(
            "truncation index {k_bar} outside 1..={k_steps}"
        )));
    }
    let base = forward_raw(problem, x, z, k_steps, schedule)?;
    let mut diag = FdDiagnostics::default();

    let value_at = |xx: &Vector, zz: &Vector| -> Result<(f64, TrajectoryRecord)> {
        let rec = forward_raw(problem, xx, zz, k_steps, schedule)?;
        Ok((problem.upper_objective(xx, &rec.iterates[k_bar]), rec))
    };

    let mut gx = vec![0.0; x.dim()];
    let mut xs = x.as_slice().to_vec();
    for i in 0..x.dim() {
        let orig = xs[i];
        xs[i] = orig + h;
        let (fp, rp) = value_at(&Vector::from_slice(&xs), z)?;
        xs[i] = orig - h;
        let (fm, rm) = value_at(&Vector::from_slice(&xs), z)?;
        xs[i] = orig;
        gx[i] = (fp - fm) / (2.0 * h);
        if !masks_match(&base, &rp, k_bar) || !masks_match(&base, &rm, k_bar) {
            diag.suspect_x.push(i);
        }
    }

    let mut gz = vec![0.0; z.dim()];
    let mut zs = z.as_slice().to_vec();
    for i in 0..z.dim() {
        let orig = zs[i];
        zs[i] = orig + h;
        let (fp, rp) = value_at(x, &Vector::from_slice(&zs))?;
        zs[i] = orig - h;
        let (fm, rm) = value_at(x, &Vector::from_slice(&zs))?;
        zs[i] = orig;
        gz[i] = (fp - fm) / (2.0 * h);
        if !masks_match(&base, &rp, k_bar) || !masks_match(&base, &rm, k_bar) {
            diag.suspect_z.push(i);
        }
    }

    let hg = HyperGradient::checked(
        Vector::new(gx)?,
        Vector::new(gz)?,
        k_bar,
        HypergradMethod::FiniteDifference,
    )?;
    Ok((hg, diag))
}

/// Forward dynamics with the initialization taken literally (y_0 = z, even
/// slightly outside the box); later iterates project as usual.
fn forward_raw(
    problem: &dyn BilevelProblem,
    x: &Vector,
    z: &Vector,
    k_steps: usize,
    schedule: &StepSchedule,
) -> Result<TrajectoryRecord> {
    use crate::boxset::DEFAULT_ACTIVE_TOL;
    use crate::dynamics::DynamicsKind;

    if k_steps == 0 {
        return Err(Error::invalid("at least one inner step is required"));
    }
    let lower_box = problem.lower_box();
    let mut iterates = vec![z.clone()];
    let mut pre_projection = Vec::with_capacity(k_steps);
    let mut masks = Vec::with_capacity(k_steps);
    let mut upper_values = Vec::with_capacity(k_steps);
    for k in 0..k_steps {
        let y = &iterates[k];
        let g = problem.grad_y_lower(x, y);
        if !g.is_finite() {
            return Err(Error::NumericalFailure {
                step: k,
                detail: "non-finite lower gradient".into(),
            });
        }
        let w = y.axpy(-schedule.alpha(k), &g);
        masks.push(lower_box.active_mask(&w, DEFAULT_ACTIVE_TOL)?);
        let y_next = lower_box.project(&w)?;
        upper_values.push(problem.upper_objective(x, &y_next));
        pre_projection.push(w);
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

/// Outcome of the matrix-free linear solve behind the implicit hypergradient.
#[derive(Clone, Debug)]
pub struct SolveReport {
    pub iterations: usize,
    pub relative_residual: f64,
    /// Negative curvature was encountered; the returned gradient is unreliable.
    pub indefinite: bool,
    /// The solve restarted on the normal equations after hitting a
    /// zero-curvature direction (singular Hessian); the result is the
    /// pseudo-inverse solution.
    pub normal_equations: bool,
    pub converged: bool,
    /// ‖∇_y f(x, y*)‖ at the supplied point: implicit methods presume this is
    /// (approximately) zero.
    pub stationarity: f64,
}

/// Implicit hypergradient via a conjugate-gradient solve of
/// ∇²_yy f(x, y*) · v = ∇_y F(x, y*).
///
/// The initialization gradient is zero by definition: implicit methods carry
/// no initialization variable.
pub fn implicit_ls(
    problem: &dyn BilevelProblem,
    x: &Vector,
    y_star: &Vector,
    cg_tol: f64,
    cg_maxiter: usize,
    policy: &HvpPolicy,
) -> Result<(HyperGradient, SolveReport)> {
    x.check_dim(problem.upper_dim())?;
    y_star.check_dim(problem.lower_dim())?;
    let b = problem.grad_y_upper(x, y_star);
    let stationarity = problem.grad_y_lower(x, y_star).norm();
    let m = problem.lower_dim();

    let hvp = |v: &Vector| apply_hvp_yy(problem, x, y_star, v, policy);

    let (v, mut report) = if b.norm() == 0.0 {
        (
            Vector::zeros(m),
            SolveReport {
                iterations: 0,
                relative_residual: 0.0,
                indefinite: false,
                normal_equations: false,
                converged: true,
                stationarity,
            },
        )
    } else {
        let first = cg_solve(&hvp, &b, cg_tol, cg_maxiter, false)?;
        match first {
            CgOutcome::Done(v, report) => (v, report),
            CgOutcome::Singular => {
                // pseudo-inverse solution through the normal equations,
                // still matrix-free (two products per iteration)
                let hvp2 = |p: &Vector| -> Result<Vector> { hvp(&hvp(p)?) };
                let rhs = hvp(&b)?;
                match cg_solve(&hvp2, &rhs, cg_tol, cg_maxiter, true)? {
                    CgOutcome::Done(v, mut report) => {
                        report.normal_equations = true;
                        (v, report)
                    }
                    CgOutcome::Singular => unreachable!("normal equations treat null steps as converged"),
                }
            }
        }
    };
    report.stationarity = stationarity;

    let correction = apply_hvp_xy(problem, x, y_star, &v, policy)?;
    let g_x = problem.grad_x_upper(x, y_star).axpy(-1.0, &correction);
    let hg = HyperGradient::checked(
        g_x,
        Vector::zeros(m),
        0,
        HypergradMethod::ImplicitLinearSolve,
    )?;
    Ok((hg, report))
}

enum CgOutcome {
    Done(Vector, SolveReport),
    /// Hit a zero-curvature direction on a plain solve.
    Singular,
}

fn cg_solve(
    apply: &dyn Fn(&Vector) -> Result<Vector>,
    b: &Vector,
    tol: f64,
    maxiter: usize,
    normal_equations: bool,
) -> Result<CgOutcome> {
    const CURVATURE_EPS: f64 = 1e-12;
    let bnorm = b.norm();
    let mut v = Vector::zeros(b.dim());
    if bnorm == 0.0 {
        return Ok(CgOutcome::Done(
            v,
            SolveReport {
                iterations: 0,
                relative_residual: 0.0,
                indefinite: false,
                normal_equations,
                converged: true,
                stationarity: 0.0,
            },
        ));
    }
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rs = r.dot(&r);
    for it in 0..maxiter {
        let hp = apply(&p)?;
        let curvature = p.dot(&hp);
        let pp = p.dot(&p);
        if curvature <= -CURVATURE_EPS * pp {
            return Ok(CgOutcome::Done(
                v,
                SolveReport {
                    iterations: it,
                    relative_residual: rs.sqrt() / bnorm,
                    indefinite: true,
                    normal_equations,
                    converged: false,
                    stationarity: 0.0,
                },
            ));
        }
        if curvature.abs() <= CURVATURE_EPS * pp {
            if normal_equations {
                // residuals of the normal equations stay in the range space,
                // so a null search direction means the solve is finished
                return Ok(CgOutcome::Done(
                    v,
                    SolveReport {
                        iterations: it,
                        relative_residual: rs.sqrt() / bnorm,
                        indefinite: false,
                        normal_equations,
                        converged: true,
                        stationarity: 0.0,
                    },
                ));
            }
            return Ok(CgOutcome::Singular);
        }
        let step = rs / curvature;
        v = v.axpy(step, &p);
        r = r.axpy(-step, &hp);
        let rs_new = r.dot(&r);
        if rs_new.sqrt() <= tol * bnorm {
            return Ok(CgOutcome::Done(
                v,
                SolveReport {
                    iterations: it + 1,
                    relative_residual: rs_new.sqrt() / bnorm,
                    indefinite: false,
                    normal_equations,
                    converged: true,
                    stationarity: 0.0,
                },
            ));
        }
        p = r.axpy(rs_new / rs, &p);
        rs = rs_new;
    }
    Err(Error::IllConditioned {
        iterations: maxiter,
        relative_residual: rs.sqrt() / bnorm,
    })
}

/// Per-term partial-sum norms of the truncated series; a growing tail is the
/// divergence signature (the series needs α‖∇²_yy f‖ < 1, which is not
/// checked).
#[derive(Clone, Debug)]
pub struct NeumannReport {
    pub partial_sum_norms: Vec<f64>,
}

impl NeumannReport {
    pub fn diverging(&self) -> bool {
        match self.partial_sum_norms.len() {
            0 | 1 => false,
            n => {
                self.partial_sum_norms[n - 1] > self.partial_sum_norms[n - 2]
                    && self.partial_sum_norms[n - 1] > 2.0 * self.partial_sum_norms[0]
            }
        }
    }
}

/// Implicit hypergradient with the inverse Hessian-vector product replaced by
/// a truncated geometric series: v ≈ α Σ_{i<terms} (I − α ∇²_yy f)ⁱ ∇_y F.
pub fn implicit_ns(
    problem: &dyn BilevelProblem,
    x: &Vector,
    y_star: &Vector,
    alpha: f64,
    terms: usize,
    policy: &HvpPolicy,
) -> Result<(HyperGradient, NeumannReport)> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::invalid(format!("series step must be positive, got {alpha}")));
    }
    x.check_dim(problem.upper_dim())?;
    y_star.check_dim(problem.lower_dim())?;
    let m = problem.lower_dim();
    let b = problem.grad_y_upper(x, y_star);

    let mut v = Vector::zeros(m);
    let mut term = b.clone();
    let mut norms = Vec::with_capacity(terms);
    for _ in 0..terms {
        v = v.axpy(alpha, &term);
        norms.push(v.norm());
        let ht = apply_hvp_yy(problem, x, y_star, &term, policy)?;
        term = term.axpy(-alpha, &ht);
    }

    let correction = apply_hvp_xy(problem, x, y_star, &v, policy)?;
    let g_x = problem.grad_x_upper(x, y_star).axpy(-1.0, &correction);
    let hg = HyperGradient::checked(g_x, Vector::zeros(m), 0, HypergradMethod::ImplicitNeumann)?;
    Ok((hg, NeumannReport { partial_sum_norms: norms }))
}
