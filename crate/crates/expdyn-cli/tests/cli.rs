//! End-to-end tests of the binary: exit codes, file outputs, determinism.

use std::path::Path;
use std::process::{Command, Output};

fn expdyn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_expdyn"))
        .args(args)
        .env_remove("EXPDYN_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

#[test]
fn orbit_lambda_one_escapes_with_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("orbit.csv");
    let out = expdyn(&[
        "orbit",
        "--lambda",
        "1",
        "--seed",
        "0",
        "-n",
        "10",
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("status=escaped"));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("# lambda=1,0 seed=0,0"));
    assert!(text.contains("n,logmod_z,arg_z,logmod_dlog,arg_dlog"));
    // rows 0, 1, e: logmod of z_2 is 1 (|e^1| in log units)
    let row2: Vec<&str> = text.lines().nth(4).unwrap().split(',').collect();
    assert_eq!(row2[0], "2");
    assert!((row2[1].parse::<f64>().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn orbit_lambda_minus_one_converges() {
    let out = expdyn(&["orbit", "--lambda", "-1", "--seed", "0", "-n", "200"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("status=converged_p1"));
}

#[test]
fn orbit_bad_lambda_is_usage_error() {
    let out = expdyn(&["orbit", "--lambda", "x", "--seed", "0", "-n", "10"]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr).into_owned();
    assert!(err.contains("a+bi") || err.contains("accepted forms"));
}

#[test]
fn orbit_unwritable_output_exits_three() {
    let out = expdyn(&[
        "orbit",
        "--lambda",
        "1",
        "--seed",
        "0",
        "-n",
        "5",
        "--csv",
        "/nonexistent-dir/orbit.csv",
    ]);
    assert_eq!(code(&out), 3);
}

#[test]
fn orbit_json_parses_back() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("orbit.json");
    let out = expdyn(&[
        "orbit",
        "--lambda",
        "-1",
        "--seed",
        "0",
        "-n",
        "50",
        "--json",
        json.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    // complex values serialize as [re, im]
    assert_eq!(v["seed"][0], 0.0);
    assert!(v["points"].as_array().unwrap().len() > 10);
    // zero is serialized with the "-inf" tag
    assert_eq!(v["points"][0]["logmod"], "-inf");
}

#[test]
fn series_defaults_to_poincare() {
    let out = expdyn(&["series", "--lambda", "1", "-n", "20"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("verdict = absolutely-convergent"));
    assert!(text.contains("sum = 2.392155089"));
}

#[test]
fn series_summability_diverges_at_minus_one() {
    let out = expdyn(&["series", "--lambda", "-1", "-n", "120", "--at", "1"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("verdict = diverging"));
}

#[test]
fn bseries_reports_dichotomy_distance() {
    // a = e = f(1) for lambda = 1
    let out = expdyn(&[
        "bseries",
        "--lambda",
        "1",
        "--a",
        "2.718281828459045",
        "-n",
        "12",
    ]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("|B_n(f(1)) - (-1)| = 2.392155e0"));
}

#[test]
fn ruelle_eval_agrees_with_closed_form() {
    let out = expdyn(&[
        "ruelle-eval",
        "--lambda",
        "1",
        "--z",
        "3",
        "--pole",
        "2",
        "--k",
        "2000",
    ]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("closed_form = -2.27571099251"));
    let diff_line = text.lines().find(|l| l.starts_with("difference")).unwrap();
    let diff: f64 = diff_line.split('=').nth(1).unwrap().trim().parse().unwrap();
    assert!(diff < 1e-8);
}

#[test]
fn verify_suites_pass_at_defaults() {
    for suite in ["prop2", "iterate", "lemma5", "mobius"] {
        let out = expdyn(&["verify", suite]);
        assert_eq!(code(&out), 0, "suite {suite} failed: {}", stdout(&out));
        assert!(stdout(&out).contains("max residual"));
    }
}

#[test]
fn verify_prop2_scales_tolerance_with_k() {
    let out = expdyn(&["verify", "prop2", "--k", "10"]);
    assert_eq!(code(&out), 0);
}

#[test]
fn verify_failure_exits_one() {
    // K = 1 leaves a truncation residual far above the iterate tolerance
    let out = expdyn(&["verify", "iterate", "--k", "1"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn classify_emits_json() {
    let out = expdyn(&["classify", "--lambda", "1", "--horizon", "100"]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["case"], "SubseqToInfinity");
    assert_eq!(v["horizon"], 100);
}

#[test]
fn classify_respects_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("test.conf");
    std::fs::write(&conf, "horizon = 64\n").unwrap();
    let out = expdyn(&[
        "--config",
        conf.to_str().unwrap(),
        "classify",
        "--lambda",
        "0.2",
    ]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["horizon"], 64);
    assert_eq!(v["case"], "DerivativeToZero");
}

#[test]
fn shipped_default_config_loads() {
    let conf = Path::new(env!("CARGO_MANIFEST_DIR")).join("expdyn.conf.default");
    let out = expdyn(&[
        "--config",
        conf.to_str().unwrap(),
        "classify",
        "--lambda",
        "-1",
    ]);
    assert_eq!(code(&out), 0);
}

#[test]
fn scan_zero_area_exits_four() {
    let out = expdyn(&[
        "scan", "--mode", "param-classify", "--re-min", "1", "--re-max", "1", "--im-min",
        "0", "--im-max", "1", "--width", "4", "--height", "4",
    ]);
    assert_eq!(code(&out), 4);
}

#[test]
fn scan_resolution_cap_exits_four() {
    let out = expdyn(&[
        "scan",
        "--mode",
        "param-classify",
        "--re-min",
        "0",
        "--re-max",
        "1",
        "--im-min",
        "0",
        "--im-max",
        "1",
        "--width",
        "100",
        "--height",
        "100",
        "--resolution-cap",
        "99",
    ]);
    assert_eq!(code(&out), 4);
}

#[test]
fn single_pixel_scan_at_lambda_one() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("one.csv");
    let out = expdyn(&[
        "scan", "--mode", "param-classify", "--re-min", "0.9", "--re-max", "1.1",
        "--im-min", "-0.1", "--im-max", "0.1", "--width", "1", "--height", "1",
        "--csv", csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let text = std::fs::read_to_string(&csv).unwrap();
    let row = text.lines().nth(2).unwrap();
    // pixel center is exactly lambda = 1 -> escape class (code 1)
    assert_eq!(row, "0,0,1,0,1");
}

#[test]
fn scan_outputs_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for workers in ["1", "3", "7"] {
        let ppm = dir.path().join(format!("scan{workers}.ppm"));
        let csv = dir.path().join(format!("scan{workers}.csv"));
        let out = expdyn(&[
            "scan", "--mode", "param-classify", "--re-min", "-2", "--re-max", "1",
            "--im-min", "-1", "--im-max", "1", "--width", "40", "--height", "30",
            "--horizon", "60", "--workers", workers,
            "--ppm", ppm.to_str().unwrap(), "--csv", csv.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0);
        outputs.push((std::fs::read(&ppm).unwrap(), std::fs::read(&csv).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
}

#[test]
fn env_var_caps_workers() {
    let out = Command::new(env!("CARGO_BIN_EXE_expdyn"))
        .args([
            "scan", "--mode", "param-classify", "--re-min", "-1", "--re-max", "1",
            "--im-min", "-1", "--im-max", "1", "--width", "8", "--height", "8",
            "--horizon", "40",
        ])
        .env("EXPDYN_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("workers=1"));
}

#[test]
fn dynamical_scan_needs_lambda() {
    let out = expdyn(&[
        "scan", "--mode", "dynamical-escape", "--re-min", "-1", "--re-max", "1",
        "--im-min", "-1", "--im-max", "1", "--width", "4", "--height", "4",
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn real_axis_strip_transition_near_one_over_e() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("strip.csv");
    let out = expdyn(&[
        "scan", "--mode", "param-classify", "--re-min", "-3", "--re-max", "3",
        "--im-min", "-0.01", "--im-max", "0.01", "--width", "600", "--height", "4",
        "--csv", csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let text = std::fs::read_to_string(&csv).unwrap();
    // row j=1 sits just above the real axis; locate where the attracting
    // class (code 0) ends going right from 0 -- the bifurcation of the real
    // family. Measured output, bracketed rather than asserted exactly.
    let mut last_attracting = None;
    let mut first_other_after = None;
    for line in text.lines().skip(2) {
        let f: Vec<&str> = line.split(',').collect();
        let (j, re, code): (usize, f64, u8) = (
            f[1].parse().unwrap(),
            f[2].parse().unwrap(),
            f[4].parse().unwrap(),
        );
        if j != 1 || re < 0.05 {
            continue;
        }
        if code == 0 && first_other_after.is_none() {
            last_attracting = Some(re);
        } else if code != 0 && last_attracting.is_some() && first_other_after.is_none() {
            first_other_after = Some(re);
        }
    }
    let lo = last_attracting.expect("an attracting segment exists right of 0");
    let hi = first_other_after.expect("the attracting segment ends");
    let boundary = 0.5 * (lo + hi);
    let one_over_e = 1.0 / std::f64::consts::E;
    assert!(
        (boundary - one_over_e).abs() < 0.02,
        "transition at {boundary} (between {lo} and {hi}), expected near {one_over_e}"
    );
}

#[test]
fn wscan_writes_grid_rows() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("w.csv");
    let out = expdyn(&[
        "wscan", "--re-min", "-1", "--re-max", "1", "--im-min", "0", "--im-max", "0",
        "--step", "1", "--horizon", "80", "--csv", csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.contains("re_lambda,im_lambda,case_code,summable,min_dist"));
    // lambda = -1, 0, 1
    assert_eq!(text.lines().count(), 5);
    let minus_one = text.lines().nth(2).unwrap();
    assert!(minus_one.starts_with("-1,0,0,diverging,"));
    let plus_one = text.lines().nth(4).unwrap();
    assert!(plus_one.starts_with("1,0,1,absolutely-convergent,1,"));
}

#[test]
fn prop1scan_reports_zero_flags_on_coarse_grid() {
    let out = expdyn(&[
        "prop1scan", "--re-min", "-3", "--re-max", "3", "--step", "0.1", "--horizon",
        "150",
    ]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("61 parameters, 0 flagged"));
}
