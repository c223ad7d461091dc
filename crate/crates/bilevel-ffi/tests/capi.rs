//! Exercise the C ABI exactly as a foreign caller would: raw pointers,
//! status codes, and the last-error channel.

use std::ffi::CString;
use std::ptr;

use bilevel_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0i8; 256];
    let n = unsafe { bilevel_last_error_message(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..n.min(buf.len() - 1)].iter().map(|c| *c as u8).collect();
    String::from_utf8_lossy(&bytes).into_owned()
}

#[test]
fn sine_problem_round_trip() {
    unsafe {
        let mut problem: *mut BilevelProblemHandle = ptr::null_mut();
        assert_eq!(bilevel_problem_sine(&mut problem), BilevelStatus::Ok);
        assert!(!problem.is_null());

        let (mut n, mut m) = (0usize, 0usize);
        assert_eq!(bilevel_problem_dims(problem, &mut n, &mut m), BilevelStatus::Ok);
        assert_eq!((n, m), (1, 1));

        // residual at the known optimum is numerically zero
        let x = [11.0 * std::f64::consts::PI / 4.0];
        let y = [-2.0];
        let mut r = f64::NAN;
        assert_eq!(
            bilevel_residual_norm(problem, x.as_ptr(), 1, y.as_ptr(), 1, 0.01, &mut r),
            BilevelStatus::Ok
        );
        assert!(r < 1e-12, "residual {r}");

        bilevel_problem_free(problem);
    }
}

#[test]
fn run_and_read_logs() {
    unsafe {
        let mut problem: *mut BilevelProblemHandle = ptr::null_mut();
        assert_eq!(bilevel_problem_sine(&mut problem), BilevelStatus::Ok);

        let method = CString::new("iaptt-gm").unwrap();
        let config = BilevelRunConfig {
            method: method.as_ptr(),
            outer_iters: 25,
            inner_iters: 10,
            alpha_inner: 5e-4,
            alpha_x: 0.1,
            alpha_z: 0.1,
            mu: 0.0,
            truncate_at: 0,
            seed: 3,
            adaptive_outer: false,
        };
        let x0 = [1.0];
        let z0 = [2.0];
        let mut run: *mut BilevelRunHandle = ptr::null_mut();
        assert_eq!(
            bilevel_run(problem, &config, x0.as_ptr(), 1, z0.as_ptr(), 1, &mut run),
            BilevelStatus::Ok
        );
        assert_eq!(bilevel_run_steps(run), 25);

        let mut row = BilevelLogRow {
            t: 0,
            upper_value: 0.0,
            x_rel_err: 0.0,
            upper_rel_err: 0.0,
            selected_index: 0,
            grad_norm_x: 0.0,
            grad_norm_z: 0.0,
            residual: 0.0,
            wall_millis: 0,
        };
        assert_eq!(bilevel_run_log(run, 0, &mut row), BilevelStatus::Ok);
        assert!(row.upper_value.is_finite());
        assert!(row.selected_index >= 1 && row.selected_index <= 10);
        assert!(row.x_rel_err.is_finite(), "sine has a known optimum");

        // out-of-range step is an argument error
        assert_eq!(bilevel_run_log(run, 25, &mut row), BilevelStatus::InvalidArgument);

        let mut x_final = [0.0f64];
        let mut z_final = [0.0f64];
        assert_eq!(
            bilevel_run_final_upper(run, x_final.as_mut_ptr(), 1),
            BilevelStatus::Ok
        );
        assert_eq!(
            bilevel_run_final_init(run, z_final.as_mut_ptr(), 1),
            BilevelStatus::Ok
        );
        assert!((1.0..=10.0).contains(&x_final[0]));
        assert!((-2.0..=2.0).contains(&z_final[0]));

        bilevel_run_free(run);
        bilevel_problem_free(problem);
    }
}

#[test]
fn hypergradient_matches_library_path() {
    unsafe {
        let mut problem: *mut BilevelProblemHandle = ptr::null_mut();
        assert_eq!(bilevel_problem_quadratic(2, &mut problem), BilevelStatus::Ok);

        let x = [0.5, -0.3];
        let z = [0.2, 0.1, -0.4, 0.8];
        let mut gx = [0.0f64; 2];
        let mut gz = [0.0f64; 4];
        assert_eq!(
            bilevel_hypergradient(
                problem,
                x.as_ptr(),
                2,
                z.as_ptr(),
                4,
                1,
                1,
                0.1,
                gx.as_mut_ptr(),
                2,
                gz.as_mut_ptr(),
                4,
            ),
            BilevelStatus::Ok
        );

        // same computation through the Rust API
        let p = bilevel::problems::convex_quadratic(2).unwrap();
        let xv = bilevel::Vector::from_slice(&x);
        let zv = bilevel::Vector::from_slice(&z);
        let schedule = bilevel::dynamics::StepSchedule::constant(0.1).unwrap();
        let record = bilevel::dynamics::pgd_forward(&p, &xv, &zv, 1, &schedule).unwrap();
        let hg = bilevel::hypergrad::unrolled_reverse(
            &p,
            &xv,
            &record,
            1,
            &bilevel::hypergrad::HvpPolicy::default(),
        )
        .unwrap();
        for (i, v) in gx.iter().enumerate() {
            assert_eq!(*v, hg.g_x[i]);
        }
        for (i, v) in gz.iter().enumerate() {
            assert_eq!(*v, hg.g_z[i]);
        }

        bilevel_problem_free(problem);
    }
}

#[test]
fn error_paths_set_status_and_message() {
    unsafe {
        // null output pointer
        assert_eq!(bilevel_problem_sine(ptr::null_mut()), BilevelStatus::NullArgument);

        // invalid dimension
        let mut problem: *mut BilevelProblemHandle = ptr::null_mut();
        assert_eq!(
            bilevel_problem_quadratic(0, &mut problem),
            BilevelStatus::InvalidArgument
        );

        // unknown method name lands in the error message
        assert_eq!(bilevel_problem_sine(&mut problem), BilevelStatus::Ok);
        let method = CString::new("gradient-bogus").unwrap();
        let config = BilevelRunConfig {
            method: method.as_ptr(),
            outer_iters: 1,
            inner_iters: 1,
            alpha_inner: 5e-4,
            alpha_x: 0.1,
            alpha_z: 0.1,
            mu: 0.0,
            truncate_at: 0,
            seed: 0,
            adaptive_outer: false,
        };
        let x0 = [1.0];
        let z0 = [0.0];
        let mut run: *mut BilevelRunHandle = ptr::null_mut();
        assert_eq!(
            bilevel_run(problem, &config, x0.as_ptr(), 1, z0.as_ptr(), 1, &mut run),
            BilevelStatus::InvalidArgument
        );
        assert!(last_error().contains("gradient-bogus"), "{}", last_error());

        // undersized output buffer
        let good = CString::new("rhg").unwrap();
        let config = BilevelRunConfig {
            method: good.as_ptr(),
            ..config
        };
        assert_eq!(
            bilevel_run(problem, &config, x0.as_ptr(), 1, z0.as_ptr(), 1, &mut run),
            BilevelStatus::Ok
        );
        let mut too_small: [f64; 0] = [];
        assert_eq!(
            bilevel_run_final_upper(run, too_small.as_mut_ptr(), 0),
            BilevelStatus::BufferTooSmall
        );

        bilevel_run_free(run);
        bilevel_problem_free(problem);
    }
}

#[test]
fn header_is_generated_with_the_expected_surface() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/bilevel.h");
    let text = std::fs::read_to_string(header).expect("generated header");
    for needle in [
        "BILEVEL_H",
        "BilevelStatus",
        "BilevelProblemHandle",
        "BilevelRunHandle",
        "bilevel_problem_sine",
        "bilevel_run(",
        "bilevel_run_log",
        "bilevel_hypergradient",
        "bilevel_last_error_message",
    ] {
        assert!(text.contains(needle), "header missing {needle}");
    }
}
