use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use glfit::circular::{sample_pgl, AngleSample, PGLParams};
use glfit::estimate::{fit_vm, Method};
use glfit::gl::{sample_gl, GLParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn glfit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_glfit"))
        .args(args)
        .env_remove("GLFIT_SEED")
        .output()
        .expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn sample_writes_requested_rows_and_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("y.csv");
    let o = glfit(&["sample", "--dist", "gl", "--theta", "1", "--sigma", "1", "--mu", "3", "--alpha", "2", "-n", "500", "--seed", "7", "-o", path_str(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let bytes = fs::read(&out).unwrap();
    assert_eq!(bytes.iter().filter(|&&b| b == b'\n').count(), 500);

    let p = GLParams::univariate(1.0, 1.0, 3.0, 2.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut expected = Vec::new();
    sample_gl(&p, 500, &mut rng).unwrap().write_csv(&mut expected).unwrap();
    assert_eq!(bytes, expected);
}

#[test]
fn seed_falls_back_to_environment() {
    let run = |env: Option<&str>| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_glfit"));
        c.args(["sample", "--dist", "vm", "--location", "0", "--kappa", "2", "-n", "5"]);
        match env {
            Some(v) => c.env("GLFIT_SEED", v),
            None => c.env_remove("GLFIT_SEED"),
        };
        c.output().unwrap().stdout
    };
    let explicit = glfit(&["sample", "--dist", "vm", "--location", "0", "--kappa", "2", "-n", "5", "--seed", "99"]).stdout;
    assert_eq!(run(Some("99")), explicit);
    assert_ne!(run(None), explicit);
}

#[test]
fn pgl_density_grid_integrates_to_one() {
    let o = glfit(&["density", "--dist", "pgl", "--theta=-2,0", "--sigma", "30,4,4,1", "--alpha", "0.5", "--grid", "361"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("omega,logpdf,pdf"));
    let rows: Vec<(f64, f64)> = lines
        .map(|l| {
            let f: Vec<f64> = l.split(',').map(|t| t.parse().unwrap()).collect();
            (f[0], f[2])
        })
        .collect();
    assert_eq!(rows.len(), 361);
    assert!((rows[0].0 + std::f64::consts::PI).abs() < 1e-15);
    let total: f64 = rows.windows(2).map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0)).sum();
    assert!((total - 1.0).abs() < 1e-3, "{total}");
}

#[test]
fn line_density_reads_points() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("pts.csv");
    fs::write(&input, "0\n1.5\n").unwrap();
    let o = glfit(&["density", "--dist", "laplace", "--theta", "0", "--sigma", "1", "-i", path_str(&input)]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    let lp: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    // L(0,1) has density exp(-sqrt(2)|y|)/sqrt(2).
    let oracle = |y: f64| -(2f64.sqrt()) * y.abs() - 0.5 * 2f64.ln();
    assert!((lp[0] - oracle(0.0)).abs() < 1e-12);
    assert!((lp[1] - oracle(1.5)).abs() < 1e-12);
}

#[test]
fn fit_writes_json_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("angles.csv");
    let p = PGLParams::new([-2.0, 0.0], 30f64.sqrt(), 4.0 / 30f64.sqrt(), 0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let sample = sample_pgl(&p, 300, &mut rng).unwrap();
    sample.write_csv(fs::File::create(&data).unwrap()).unwrap();
    let out = dir.path().join("fit.json");
    let o = glfit(&["fit", "--dist", "pgl", "--method", "gq-qn", "--nodes", "20", "-i", path_str(&data), "-o", path_str(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&fs::read(&out).unwrap()).unwrap();
    assert_eq!(v["model"], "pgl");
    assert_eq!(v["method"], "gq_qn_h20");
    assert_eq!(v["converged"], true);
    assert!(v["loglik"].as_f64().unwrap().is_finite());
    assert_eq!(v["eta"].as_array().unwrap().len(), 5);
}

#[test]
fn vm_fit_is_byte_identical_to_library_apart_from_timing() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("a.csv");
    fs::write(&data, "0.1\n0.3\n-0.2\n0.05\n2.9\n").unwrap();
    let o = glfit(&["fit", "--dist", "vm", "-i", path_str(&data)]);
    assert_eq!(o.status.code(), Some(0));
    let mut cli: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let sample = AngleSample::read_csv(fs::read(&data).unwrap().as_slice()).unwrap();
    let mut lib = fit_vm(&sample).unwrap().to_json();
    cli["elapsed_seconds"] = serde_json::Value::Null;
    lib["elapsed_seconds"] = serde_json::Value::Null;
    assert_eq!(cli, lib);
}

#[test]
fn non_converged_fit_still_writes_result_and_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("y.csv");
    let p = GLParams::univariate(0.0, 1.0, 0.0, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    sample_gl(&p, 100, &mut rng).unwrap().write_csv(fs::File::create(&data).unwrap()).unwrap();
    let out = dir.path().join("fit.json");
    let o = glfit(&["fit", "--dist", "gl", "--method", "gq-nm", "--max-iter", "3", "-i", path_str(&data), "-o", path_str(&out)]);
    assert_eq!(o.status.code(), Some(2));
    let v: serde_json::Value = serde_json::from_slice(&fs::read(&out).unwrap()).unwrap();
    assert_eq!(v["converged"], false);
    assert_eq!(v["reason"], "iteration_cap");
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "1.0\n2.0\nnot-a-number\n").unwrap();
    let o = glfit(&["fit", "--dist", "gl", "-i", path_str(&bad)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));

    for args in [
        &["sample", "--dist", "gl", "-n", "5"][..],
        &["sample", "--dist", "vm", "--kappa", "1", "--location", "0", "--alpha", "2", "-n", "5"],
        &["sample", "--dist", "laplace", "--theta", "0", "--sigma", "-1", "-n", "5"],
        &["sample", "--dist", "laplace", "--theta", "0", "--sigma", "1", "-n", "5", "--bogus"],
        &["density", "--dist", "pgl", "--theta=0,0", "--alpha", "1", "--from", "0"],
        &["fit", "--dist", "gl", "--method", "gq-qn-h20", "--nodes", "30", "-i", path_str(&bad)],
        &["simulate", "--part", "3", "--out-dir", path_str(dir.path())],
        &["frobnicate"],
    ] {
        assert_eq!(glfit(args).status.code(), Some(1), "{args:?}");
    }
}

#[test]
fn help_lists_flags_and_exits_zero() {
    let o = glfit(&["density", "--help"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    for flag in ["--dist", "--theta", "--sigma", "--mu", "--alpha", "--phi", "--rho", "--kappa", "--location", "--grid", "--from", "--to", "--exact", "--nodes", "--degrees"] {
        assert!(text.contains(flag), "{flag}");
    }
}

#[test]
fn degrees_convert_on_input() {
    let dir = tempfile::tempdir().unwrap();
    let deg = dir.path().join("deg.csv");
    let rad = dir.path().join("rad.csv");
    fs::write(&deg, "90\n-45\n").unwrap();
    fs::write(&rad, format!("{}\n{}\n", std::f64::consts::FRAC_PI_2, -std::f64::consts::FRAC_PI_4)).unwrap();
    let common = ["density", "--dist", "vm", "--location", "0.5", "--kappa", "3"];
    let a = glfit(&[&common[..], &["--degrees", "-i", path_str(&deg)]].concat());
    let b = glfit(&[&common[..], &["-i", path_str(&rad)]].concat());
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn simulate_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let o = glfit(&[
        "simulate", "--part", "1", "--reps", "2", "--scenario", "laplace_n30", "--method", "gq_qn_h20", "--method", "direct_ml",
        "--no-timings", "--out-dir", path_str(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert!(summary.starts_with("scenario,method,n,mse_ev,mse_var,mean_loglik,mean_time_s,failure_prop\n"));
    assert_eq!(summary.lines().count(), 3);
    let reps = fs::read_to_string(dir.path().join("replications.csv")).unwrap();
    assert_eq!(reps.lines().count(), 5);
    assert!(reps.lines().skip(1).all(|l| l.split(',').nth(8) == Some("")));
    assert_eq!(Method::parse("gq-qn", None).unwrap().name(), "gq_qn_h20");
}
