use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use tempfile::TempDir;

#[path = "../src/report.rs"]
#[allow(dead_code)]
mod report;

use report::{AnalyzeReport, NoiseReport, VerifyReport};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_infostab"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name).display().to_string()
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).display().to_string()
}

fn json(p: &str) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn heat_cascade(dir: &TempDir) -> String {
    let d = path(dir, "heat.json");
    let o = run(&["generate", "--scenario", "heat-cascade", "--out", &d]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    d
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let p: PathBuf = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

const FINITE_PLUS: [&str; 10] =
    ["--mode", "finite-plus", "--gamma", "0.9", "--gamma-minus", "0.89", "--a0", "0.1", "--b0", "0"];

#[test]
fn generate_heat_cascade_defaults() {
    let dir = TempDir::new().unwrap();
    let v = json(&heat_cascade(&dir));
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["N"], 5);
    assert_eq!(v["n"], 52);
    assert_eq!(v["m"], 1);
    assert_eq!(v["x0"][0][2], 1.0);
    assert_eq!(v["x0"][0][0], 0.0);
    assert!(v["u0"].as_array().unwrap().iter().all(|u| u[0] == 1.0));
}

#[test]
fn generate_counterexample_truncation() {
    let dir = TempDir::new().unwrap();
    let d = path(&dir, "c.json");
    assert_eq!(code(&run(&["generate", "--scenario", "counterexample", "--n", "100", "--out", &d])), 0);
    let v = json(&d);
    assert_eq!(v["n"], 100);
    assert_eq!(v["N"], 100);
    assert_eq!(v["x0"][3][3], 0.25);
    assert_eq!(v["x0"][3][2], 0.0);
    assert_eq!(v["u0"][3][0], 4f64.powf(-1.5));
    assert!(v["x1"].as_array().unwrap().iter().flat_map(|r| r.as_array().unwrap()).all(|x| x == 0.0));
}

#[test]
fn generate_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (path(&dir, "a.json"), path(&dir, "b.json"));
    for p in [&a, &b] {
        assert_eq!(code(&run(&["generate", "--scenario", "random-lti", "--seed", "7", "--out", p])), 0);
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let c = path(&dir, "c.json");
    run(&["generate", "--scenario", "random-lti", "--seed", "8", "--out", &c]);
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
}

#[test]
fn analyze_finite_plus_reference_instance() {
    let dir = TempDir::new().unwrap();
    let d = heat_cascade(&dir);
    let r = path(&dir, "r.json");
    let mut args = vec!["analyze", "--in", &d, "--out", &r];
    args.extend(FINITE_PLUS);
    let o = run(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rep: AnalyzeReport = serde_json::from_str(&fs::read_to_string(&r).unwrap()).unwrap();
    assert!(rep.informative);
    let dec = rep.decomposition.unwrap();
    assert_eq!((dec.n0, dec.n_plus, dec.n), (2, 4, 52));
    let s = rep.stabilization.unwrap();
    assert_eq!(s.k.as_ref().unwrap()[0].len(), 4);
    assert_eq!(s.k_lifted.as_ref().unwrap()[0].len(), 52);
    assert!(s.closed_loop_radius.unwrap() <= 0.9);
    let cert = s.certificate.unwrap();
    assert!(cert.m >= 1.0 && cert.gamma == 0.9);
    assert!(s.lmi_margin.unwrap() >= -1e-8);
}

#[test]
fn analyze_counterexample_identify_reports_rank() {
    let dir = TempDir::new().unwrap();
    let d = path(&dir, "c.json");
    run(&["generate", "--scenario", "counterexample", "--n", "100", "--out", &d]);
    let r = path(&dir, "r.json");
    let o = run(&["analyze", "--in", &d, "--mode", "identify", "--out", &r]);
    let rep: AnalyzeReport = serde_json::from_str(&fs::read_to_string(&r).unwrap()).unwrap();
    let id = rep.identification.unwrap();
    assert_eq!((id.rank, id.required), (100, 101));
    assert_eq!(id.informative, rep.informative);
    assert_eq!(code(&o), if rep.informative { 0 } else { 1 });
}

#[test]
fn analyze_zero_input_is_not_informative() {
    let dir = TempDir::new().unwrap();
    let d = write(
        &dir,
        "z.json",
        r#"{"schema_version":1,"n":1,"m":1,"N":3,"x1":[[1.0],[2.0],[3.0]],"x0":[[1.0],[2.0],[3.0]],"u0":[[0.0],[0.0],[0.0]]}"#,
    );
    let r = path(&dir, "r.json");
    let o = run(&["analyze", "--in", &d, "--mode", "identify", "--out", &r]);
    assert_eq!(code(&o), 1);
    let v = json(&r);
    assert_eq!(v["informative"], false);
    assert_eq!(v["identification"]["rank"], 1);
}

#[test]
fn analyze_stabilize_writes_verdict_on_failure() {
    let dir = TempDir::new().unwrap();
    let d = write(
        &dir,
        "u.json",
        r#"{"schema_version":1,"n":2,"m":1,"N":1,"x1":[[2.0,0.0]],"x0":[[1.0,0.0]],"u0":[[0.0]]}"#,
    );
    let r = path(&dir, "r.json");
    assert_eq!(code(&run(&["analyze", "--in", &d, "--mode", "stabilize", "--out", &r])), 1);
    let rep: AnalyzeReport = serde_json::from_str(&fs::read_to_string(&r).unwrap()).unwrap();
    assert!(!rep.informative);
    assert!(rep.stabilization.unwrap().failed_stage.is_some());
}

#[test]
fn input_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    let bad = write(&dir, "bad.json", "{ not json");
    let missing = path(&dir, "missing.json");
    let short = write(&dir, "short.json", r#"{"n":1,"m":1,"N":2,"x1":[[1.0]],"x0":[[1.0]],"u0":[[1.0]]}"#);
    let version =
        write(&dir, "v.json", r#"{"schema_version":2,"n":1,"m":1,"N":1,"x1":[[1.0]],"x0":[[1.0]],"u0":[[1.0]]}"#);
    for input in [&bad, &missing, &short, &version] {
        assert_eq!(code(&run(&["analyze", "--in", input, "--mode", "identify"])), 2, "{input}");
    }
    let d = heat_cascade(&dir);
    assert_eq!(code(&run(&["analyze", "--in", &d, "--mode", "identify", "--tol", "0"])), 2);
    assert_eq!(code(&run(&["analyze", "--in", &d, "--mode", "finite-plus", "--gamma-minus", "1.5"])), 2);
    assert_eq!(code(&run(&["analyze", "--in", &d, "--mode", "bogus"])), 2);
    assert_eq!(code(&run(&["generate", "--scenario", "nope"])), 2);
    assert_eq!(code(&run(&["generate", "--scenario", "counterexample", "--n", "0"])), 2);
    let nested = path(&dir, "no/such/dir/out.json");
    assert_eq!(code(&run(&["generate", "--scenario", "heat-cascade", "--out", &nested])), 2);
    let gain = write(&dir, "k.json", r#"{"K": [[1.0, 2.0]]}"#);
    assert_eq!(code(&run(&["verify", "--in", &d, "--gain", &gain])), 2);
}

#[test]
fn verify_reference_gain_passes() {
    let dir = TempDir::new().unwrap();
    let d = heat_cascade(&dir);
    let r = path(&dir, "v.json");
    let gain = fixture("reference_gain.json");
    let o = run(&["verify", "--in", &d, "--gain", &gain, "--trials", "200", "--out", &r]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rep: VerifyReport = serde_json::from_str(&fs::read_to_string(&r).unwrap()).unwrap();
    assert!(rep.passed);
    assert_eq!(rep.trials, 200);
    assert!(rep.worst_radius.unwrap() <= 0.9 + 1e-6);
    assert!(rep.full_worst_radius.unwrap() <= 0.9 + 1e-6);
}

#[test]
fn verify_zero_gain_on_unstable_data_fails() {
    let dir = TempDir::new().unwrap();
    let d = write(
        &dir,
        "u.json",
        r#"{"schema_version":1,"n":1,"m":1,"N":3,"x1":[[2.0],[1.0],[3.0]],"x0":[[1.0],[0.0],[1.0]],"u0":[[0.0],[1.0],[1.0]]}"#,
    );
    let gain = write(&dir, "k.json", r#"{"K": [[0.0]]}"#);
    let r = path(&dir, "v.json");
    let o = run(&["verify", "--in", &d, "--gain", &gain, "--mode", "stabilize", "--trials", "10", "--out", &r]);
    assert_eq!(code(&o), 1);
    let rep: VerifyReport = serde_json::from_str(&fs::read_to_string(&r).unwrap()).unwrap();
    assert!(!rep.passed);
    assert_eq!(rep.violations, 10);
    let bad = rep.offending.unwrap();
    assert!((bad.a[0][0] - 2.0).abs() < 1e-12 && (bad.b[0][0] - 1.0).abs() < 1e-12);
    assert!((bad.radius - 2.0).abs() < 1e-12);

    let stab = write(&dir, "s.json", r#"{"K": [[-2.0]]}"#);
    assert_eq!(code(&run(&["verify", "--in", &d, "--gain", &stab, "--mode", "stabilize"])), 0);
}

#[test]
fn verify_zero_trials_passes_with_warning() {
    let dir = TempDir::new().unwrap();
    let d = heat_cascade(&dir);
    let r = path(&dir, "v.json");
    let gain = fixture("reference_gain.json");
    let o = run(&["verify", "--in", &d, "--gain", &gain, "--trials", "0", "--out", &r]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
    let rep: VerifyReport = serde_json::from_str(&fs::read_to_string(&r).unwrap()).unwrap();
    assert!(rep.passed && rep.warning.is_some() && rep.worst_radius.is_none());
}

fn noisy_heat_cascade(dir: &TempDir) -> String {
    let d = path(dir, "noisy.json");
    let o = run(&["generate", "--scenario", "heat-cascade", "--noise-level", "1e-6", "--seed", "3", "--out", &d]);
    assert_eq!(code(&o), 0);
    d
}

fn noise_report(args: &[&str]) -> (i32, NoiseReport) {
    let dir = TempDir::new().unwrap();
    let r = path(&dir, "n.json");
    let mut all = vec!["noise", "--out", &r];
    all.extend(args);
    let o = run(&all);
    let rep = serde_json::from_str(&fs::read_to_string(&r).unwrap()).unwrap();
    (code(&o), rep)
}

#[test]
fn noise_without_budget_keeps_rate() {
    let dir = TempDir::new().unwrap();
    let d = noisy_heat_cascade(&dir);
    let (c, rep) = noise_report(&["--in", &d, "--mode", "finite-plus", "--c1", "0", "--c0", "0", "--trials", "20"]);
    assert_eq!(c, 0);
    assert_eq!(rep.gamma_tilde, Some(rep.gamma));
    assert_eq!(rep.margin_ok, Some(true));
}

#[test]
fn noise_budget_violation_fails() {
    let dir = TempDir::new().unwrap();
    let d = noisy_heat_cascade(&dir);
    let (c, rep) =
        noise_report(&["--in", &d, "--mode", "finite-plus", "--c1", "0.01", "--c0", "0.01", "--trials", "5"]);
    assert_eq!(c, 1);
    assert_eq!(rep.margin_ok, Some(false));
    assert!(!rep.passed);
    let m = rep.m.unwrap();
    assert!(m * (rep.gamma * rep.c1 + rep.c0) >= 1.0 - rep.gamma);
}

#[test]
fn noise_small_budget_passes() {
    let dir = TempDir::new().unwrap();
    let d = noisy_heat_cascade(&dir);
    let (c, rep) =
        noise_report(&["--in", &d, "--mode", "finite-plus", "--c1", "1e-4", "--c0", "1e-4", "--trials", "50"]);
    assert_eq!(c, 0);
    assert!(rep.passed);
    assert!(rep.gamma_tilde.unwrap() < 1.0);
    let v = rep.verification.unwrap();
    assert_eq!(v.violations, 0);
    assert!(v.trials - v.skipped > 0);
    assert_eq!(rep.decomposition.unwrap().n0, 2);
}

#[test]
fn noise_not_applicable_reports_stage() {
    let dir = TempDir::new().unwrap();
    let d = heat_cascade(&dir);
    let (c, rep) = noise_report(&["--in", &d, "--c1", "0", "--c0", "0"]);
    assert_eq!(c, 1);
    assert!(rep.stage.is_some());
    assert!(rep.k.is_none());
}

#[test]
fn reports_are_byte_identical_and_round_trip() {
    let dir = TempDir::new().unwrap();
    let d = heat_cascade(&dir);
    let noisy = noisy_heat_cascade(&dir);
    let gain = fixture("reference_gain.json");
    let runs: Vec<Vec<&str>> = vec![
        [&["analyze", "--in", &d][..], &FINITE_PLUS[..]].concat(),
        vec!["verify", "--in", &d, "--gain", &gain, "--trials", "50", "--seed", "4"],
        vec!["noise", "--in", &noisy, "--mode", "finite-plus", "--c1", "1e-4", "--c0", "1e-4", "--trials", "10"],
    ];
    for (i, args) in runs.iter().enumerate() {
        let outs: Vec<String> = (0..2)
            .map(|j| {
                let p = path(&dir, &format!("r{i}_{j}.json"));
                let mut a = args.clone();
                a.extend(["--out", &p]);
                run(&a);
                fs::read_to_string(&p).unwrap()
            })
            .collect();
        assert_eq!(outs[0], outs[1]);
        let text = outs[0].trim_end();
        let again = match i {
            0 => serde_json::from_str::<AnalyzeReport>(text).unwrap().to_json(),
            1 => serde_json::from_str::<VerifyReport>(text).unwrap().to_json(),
            _ => serde_json::from_str::<NoiseReport>(text).unwrap().to_json(),
        };
        assert_eq!(again, text);
        assert_eq!(json(&path(&dir, &format!("r{i}_0.json")))["schema_version"], 1);
    }
}

#[test]
fn stdout_when_no_out_path() {
    let o = run(&["generate", "--scenario", "counterexample", "--n", "3"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["n"], 3);
}

#[test]
fn end_to_end_chain_is_fast() {
    let dir = TempDir::new().unwrap();
    let start = Instant::now();
    let d = heat_cascade(&dir);
    let r = path(&dir, "r.json");
    let mut args = vec!["analyze", "--in", &d, "--out", &r];
    args.extend(FINITE_PLUS);
    assert_eq!(code(&run(&args)), 0);
    let rep: AnalyzeReport = serde_json::from_str(&fs::read_to_string(&r).unwrap()).unwrap();
    let k = write(&dir, "k.json", &serde_json::json!({ "K": rep.stabilization.unwrap().k }).to_string());
    assert_eq!(code(&run(&["verify", "--in", &d, "--gain", &k])), 0);
    assert_eq!(rep.decomposition.unwrap().n0, 2);
    assert!(start.elapsed().as_secs_f64() < 60.0);
}
