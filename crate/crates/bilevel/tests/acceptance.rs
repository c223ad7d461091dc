//! Acceptance suite: every top-level numerical claim the library makes, run
//! at its stated tolerance. One pass/fail line per criterion (visible with
//! `cargo test --test acceptance -- --nocapture`).

use bilevel::bench::{acceleration_race, hyperclean_smoke};
use bilevel::dynamics::StepSchedule;
use bilevel::problems::{convex_quadratic, nonconvex_sine, NonconvexSine};
use bilevel::solvers::{average_k_bar, run_variant, MethodKind, SolverConfig};
use bilevel::theory::{
    acceleration_check, fixed_point_check, hypergrad_agreement_check, implicit_consistency_check,
    phi_gap_check, rate_check,
};
use bilevel::vector::Vector;

fn verdict(name: &str, pass: bool, detail: &str) -> bool {
    println!(
        "criterion {name}: {} - {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    pass
}

/// Criterion 1: from each of the three reference starts, the full method
/// reaches both relative errors below 5% within 500 outer steps; the
/// frozen-initialization baseline misses that threshold from at least one
/// start, and the untruncated variant misses it from at least one start.
#[test]
fn criterion_1_nonconvex_three_start_convergence() {
    let problem = nonconvex_sine();
    let starts = [(1.0, 2.0), (5.0, 1.0), (7.0, -1.0)];
    // "reaches within T": some logged step has both relative errors below 5%
    let reaches = |method: MethodKind| -> Vec<bool> {
        starts
            .iter()
            .map(|(x0, z0)| {
                let cfg = SolverConfig::new(method);
                let state = run_variant(
                    &problem,
                    &cfg,
                    &Vector::from_slice(&[*x0]),
                    &Vector::from_slice(&[*z0]),
                )
                .expect("run");
                state.logs.iter().any(|l| {
                    l.x_rel_err.is_some_and(|e| e < 0.05)
                        && l.upper_rel_err.is_some_and(|e| e < 0.05)
                })
            })
            .collect()
    };

    let iaptt = reaches(MethodKind::IapttGm);
    let rhg = reaches(MethodKind::Rhg);
    let iagm = reaches(MethodKind::IaGm);

    let iaptt_all = iaptt.iter().all(|r| *r);
    let rhg_some_fail = rhg.iter().any(|r| !*r);
    let iagm_some_fail = iagm.iter().any(|r| !*r);

    let pass = verdict(
        "1 (three-start convergence)",
        iaptt_all && rhg_some_fail && iagm_some_fail,
        &format!(
            "iaptt-gm reaches from all starts: {iaptt_all} ({iaptt:?}); \
             rhg fails somewhere: {rhg_some_fail} ({rhg:?}); \
             ia-gm fails somewhere: {iagm_some_fail} ({iagm:?})"
        ),
    );
    assert!(
        pass,
        "three-start comparison violated: iaptt all-pass = {iaptt_all}, \
         rhg some-fail = {rhg_some_fail}, ia-gm some-fail = {iagm_some_fail}; \
         the untruncated variant escapes the spurious attractor near x = 7pi/4 \
         by roughly t = 250 under these exact settings and so converges from \
         all three reference starts"
    );
}

/// Criterion 2: the best-residual decay certificate. Worst sampled
/// min-residual scaled by sqrt(K+1) stays below the analytic constant, and
/// the K=640 worst case sits below 1/8 of the K=10 worst case with 25% slack.
#[test]
fn criterion_2_residual_rate_bound() {
    let problem = nonconvex_sine();
    let schedule = StepSchedule::constant(0.01).expect("valid step");
    let report = rate_check(&problem, &[10, 40, 160, 640], 200, &schedule, 2024).expect("rate");

    let bound_ok = report.fitted_constant <= report.analytic_bound;
    let first = report.worst_min_residual[0];
    let last = *report.worst_min_residual.last().unwrap();
    let decay_ok = last <= first / 8.0 * 1.25;

    let pass = verdict(
        "2 (residual rate)",
        bound_ok && decay_ok,
        &format!(
            "fitted {:.4e} <= analytic {:.4e}: {bound_ok}; worst(640) {:.3e} <= worst(10)/8*1.25 = {:.3e}: {decay_ok}",
            report.fitted_constant,
            report.analytic_bound,
            last,
            first / 8.0 * 1.25
        ),
    );
    assert!(pass);
}

/// Criterion 3: hypergradient correctness. The reverse sweep matches the
/// rerun-the-dynamics finite-difference oracle at rtol 1e-5 over at least 50
/// interior configurations, and long unrolling matches the implicit
/// linear-solve gradient within 1e-4.
#[test]
fn criterion_3_hypergradient_correctness() {
    let agreement = hypergrad_agreement_check(50, 2024).expect("agreement");
    let oracle_ok = agreement.worst_deviation < 1e-5;

    let distance = implicit_consistency_check(5, 200, 0.15, 2024).expect("consistency");
    let implicit_ok = distance < 1e-4;

    let pass = verdict(
        "3 (hypergradient correctness)",
        oracle_ok && implicit_ok,
        &format!(
            "{} configs, worst oracle deviation {:.2e} (rtol 1e-5); unrolled-vs-implicit {:.2e} (tol 1e-4)",
            agreement.configs, agreement.worst_deviation, distance
        ),
    );
    assert!(pass);
}

/// Criterion 4: value-function gap closure. The surrogate-minimum gap at
/// K=640 is smaller than at K=10, and the K=640 minimizer's upper variable
/// lies within 0.1 of the known solution.
#[test]
fn criterion_4_value_function_gap_closure() {
    let problem = nonconvex_sine();
    let report = phi_gap_check(&problem, &[10, 40, 160, 640], 200, 200).expect("gap check");
    let gap_first = report.gap[0];
    let gap_last = *report.gap.last().unwrap();
    let closure_ok = gap_last < gap_first;
    let argmin = *report.argmin_x.last().unwrap();
    let argmin_ok = (argmin - NonconvexSine::OPT_X).abs() <= 0.1;

    let pass = verdict(
        "4 (gap closure)",
        closure_ok && argmin_ok,
        &format!(
            "gap(640) {gap_last:.3e} < gap(10) {gap_first:.3e}: {closure_ok}; argmin {argmin:.4} within 0.1 of {:.4}: {argmin_ok}",
            NonconvexSine::OPT_X
        ),
    );
    assert!(pass);
}

/// Criterion 5: acceleration. The accelerated variant reaches the plain
/// variant's final error strictly sooner (1000 outer steps, 20 inner steps,
/// rates 0.15/0.005), and the inner-dynamics suboptimality slopes separate:
/// at most -1.8 accelerated versus -0.9 +/- 0.2 plain.
#[test]
fn criterion_5_acceleration() {
    let (t_accel, t_plain, err) = acceleration_race(2024).expect("race");
    let race_ok = t_accel < t_plain;

    let quad = convex_quadratic(50).expect("problem");
    let slopes = acceleration_check(&quad, &[1, 2, 3, 4, 5, 6, 7], 30, 0.15, 2024).expect("slopes");
    let accel_ok = slopes.accel_slope <= -1.8;
    let plain_ok = (-1.1..=-0.7).contains(&slopes.plain_slope);

    let pass = verdict(
        "5 (acceleration)",
        race_ok && accel_ok && plain_ok,
        &format!(
            "race to error {err:.3e}: accelerated t={t_accel} vs plain t={t_plain}; \
             slopes: accelerated {:.3} (<= -1.8), plain {:.3} (in -0.9 +/- 0.2)",
            slopes.accel_slope, slopes.plain_slope
        ),
    );
    assert!(pass);
}

/// Criterion 6: truncation benefit. The mean selected truncation index over a
/// 500-step run with horizon 40 is strictly below 40.
#[test]
fn criterion_6_truncation_cost_benefit() {
    let problem = nonconvex_sine();
    let cfg = SolverConfig::new(MethodKind::IapttGm);
    let state = run_variant(
        &problem,
        &cfg,
        &Vector::from_slice(&[1.0]),
        &Vector::from_slice(&[2.0]),
    )
    .expect("run");
    let mean = average_k_bar(&state).expect("logged run");
    let pass = verdict(
        "6 (truncation benefit)",
        mean < 40.0,
        &format!("mean selected index {mean:.2} vs horizon 40"),
    );
    assert!(pass);
}

/// Criterion 7: fixed-point invariants. 100 closed-form stationary
/// initializations produce constant trajectories with residual norms below
/// 1e-10 under both dynamics.
#[test]
fn criterion_7_fixed_point_suite() {
    let report = fixed_point_check(100, 2024).expect("fixed points");
    let pass = verdict(
        "7 (fixed points)",
        report.max_drift < 1e-10 && report.max_residual < 1e-10,
        &format!(
            "{} starts: max drift {:.2e}, max residual {:.2e} (both < 1e-10)",
            report.cases, report.max_drift, report.max_residual
        ),
    );
    assert!(pass);
}

/// Companion smoke check: on the corrupted synthetic dataset, the reference
/// method drives validation loss below its initial value.
#[test]
fn hyperclean_validation_loss_decreases() {
    let (initial, final_loss) = hyperclean_smoke().expect("smoke run");
    let pass = verdict(
        "hyperclean smoke",
        final_loss < initial,
        &format!("validation loss {initial:.4} -> {final_loss:.4}"),
    );
    assert!(pass);
}
