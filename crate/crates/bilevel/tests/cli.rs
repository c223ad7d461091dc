//! End-to-end contract tests for the command-line harness: exit codes,
//! CSV schema and byte-reproducibility, config handling.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bilevel"))
}

fn temp_path(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("bilevel-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).expect("temp dir");
    dir.join(name)
}

#[test]
fn usage_errors_exit_with_code_two() {
    let out = bin().arg("run").arg("--bogus").arg("1").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bogus"), "{err}");

    let out = bin().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = bin().output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_config_keys_name_the_offender() {
    let cfg = temp_path("bad.cfg");
    std::fs::write(
        &cfg,
        "problem = nonconvex-sine\nsolver.method = rhg\nsolver.wibble = 3\n",
    )
    .unwrap();
    let out = bin()
        .args(["run", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("solver.wibble"), "{err}");
}

#[test]
fn default_run_writes_five_hundred_rows() {
    let csv = temp_path("default.csv");
    let out = bin()
        .args([
            "run",
            "--problem",
            "nonconvex-sine",
            "--method",
            "iaptt-gm",
            "--x0",
            "1",
            "--z0",
            "2",
            "--out",
            csv.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "run_id,method,t,F_value,x_rel_err,F_rel_err,k_bar,grad_norm_x,grad_norm_z,residual,wall_millis"
    );
    assert_eq!(lines.count(), 500);
    assert!(!text.contains('\r'));
}

#[test]
fn identical_runs_produce_byte_identical_csv() {
    let a = temp_path("rerun-a.csv");
    let b = temp_path("rerun-b.csv");
    for path in [&a, &b] {
        let out = bin()
            .args([
                "run",
                "--problem",
                "nonconvex-sine",
                "--method",
                "iaptt-gm",
                "--x0",
                "5",
                "--z0",
                "1",
                "-T",
                "40",
                "--seed",
                "7",
                "--out",
                path.to_str().unwrap(),
            ])
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0));
    }
    let bytes_a = std::fs::read(&a).unwrap();
    let bytes_b = std::fs::read(&b).unwrap();
    assert_eq!(bytes_a, bytes_b);
}

#[test]
fn seeded_random_initialization_is_reproducible() {
    let a = temp_path("rand-a.csv");
    let b = temp_path("rand-b.csv");
    for path in [&a, &b] {
        let out = bin()
            .args([
                "run",
                "--problem",
                "convex-quadratic",
                "--n",
                "4",
                "--method",
                "ia-gm",
                "-T",
                "10",
                "-K",
                "5",
                "--alpha-inner",
                "0.15",
                "--alpha-x",
                "0.001",
                "--alpha-z",
                "0.001",
                "--seed",
                "42",
                "--out",
                path.to_str().unwrap(),
            ])
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn parallel_sweep_matches_serial_sweep() {
    let serial = temp_path("sweep-serial.csv");
    let parallel = temp_path("sweep-parallel.csv");
    for (path, par) in [(&serial, "1"), (&parallel, "4")] {
        let out = bin()
            .args([
                "sweep",
                "--methods",
                "iaptt-gm,rhg,ia-gm",
                "--starts",
                "1,2;5,1",
                "-T",
                "20",
                "--parallelism",
                par,
                "--out",
                path.to_str().unwrap(),
            ])
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(
        std::fs::read(&serial).unwrap(),
        std::fs::read(&parallel).unwrap()
    );
}

#[test]
fn config_file_and_flag_overrides_compose() {
    let cfg = temp_path("compose.cfg");
    std::fs::write(
        &cfg,
        "problem = nonconvex-sine\nsolver.method = rhg\nsolver.T = 7\ninit.x0 = 2\ninit.z0 = 1\n",
    )
    .unwrap();
    let csv = temp_path("compose.csv");
    let out = bin()
        .args([
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "-T",
            "9",
            "--out",
            csv.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&csv).unwrap();
    // flag override wins: 9 rows, not 7
    assert_eq!(text.lines().count(), 10);
    assert!(text.lines().nth(1).unwrap().starts_with("0,rhg,"));
}

#[test]
fn list_names_the_catalog() {
    let out = bin().arg("list").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for needle in [
        "nonconvex-sine",
        "convex-quadratic",
        "synthetic-hyperclean",
        "iaptt-gm",
        "implicit-ns",
    ] {
        assert!(text.contains(needle), "missing {needle}");
    }
}

#[test]
fn verify_rate_suite_exits_zero_on_success() {
    let out = bin()
        .args(["verify", "--suite", "rate", "--K", "10,40,160", "--samples", "40"])
        .output()
        .unwrap();
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{text}");
    assert!(text.contains("[PASS] rate bound"), "{text}");
}

#[test]
fn summarize_renders_a_table() {
    let csv = temp_path("tosummarize.csv");
    let out = bin()
        .args([
            "run",
            "--problem",
            "nonconvex-sine",
            "--method",
            "iaptt-gm",
            "--x0",
            "1",
            "--z0",
            "2",
            "-T",
            "30",
            "--out",
            csv.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let out = bin()
        .args(["summarize", csv.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("iaptt-gm"), "{text}");
    assert!(text.contains("mean_k_bar"), "{text}");
}
