use std::fs;
use std::path::Path;

use clap::Parser;
use conic_ke::Error;
use tempfile::TempDir;

use super::*;

fn invoke(args: &[&str]) -> Result<String, CliError> {
    let mut argv = vec!["conic-ke"];
    argv.extend_from_slice(args);
    run(Cli::try_parse_from(argv).expect("arguments parse"))
}

fn out_arg(dir: &Path) -> String {
    dir.to_str().unwrap().to_string()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn column(csv: &str, name: &str) -> Vec<String> {
    let mut lines = csv.lines();
    let idx = lines.next().unwrap().split(',').position(|h| h == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().to_string()).collect()
}

#[test]
fn solve_writes_profiles_and_manifest() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    let line = invoke(&["solve", "--beta", "0.75", "--grid-N", "513", "--out", &out_arg(&out)]).unwrap();
    assert!(line.starts_with("converged"), "{line}");
    let sol = fs::read_to_string(out.join("solution.csv")).unwrap();
    assert!(sol.starts_with("t,phi_prime,phi_doubleprime\n"));
    assert_eq!(sol.lines().count(), 514);
    let m = manifest(&out);
    assert_eq!(m["command"], "solve");
    assert_eq!(m["config"]["beta"], 0.75);
    assert_eq!(m["config"]["grid"]["n_nodes"], 513);
    assert_eq!(m["grid"]["n_nodes"], 513);
    assert!(m["wall_clock_seconds"].as_f64().unwrap() >= 0.0);
    assert_eq!(m["outputs"], serde_json::json!(["solution.csv", "potential.csv"]));
}

#[test]
fn echoed_config_reproduces_the_run() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    invoke(&["solve", "--beta", "0.6", "--delta", "1e-2", "--grid-N", "513", "--out", &out_arg(&a)]).unwrap();
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, manifest(&a)["config"].to_string()).unwrap();
    invoke(&["solve", "--config", cfg.to_str().unwrap(), "--out", &out_arg(&b)]).unwrap();
    for f in ["solution.csv", "potential.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn flags_override_the_config_file() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{ "beta": 0.5, "grid": { "t_max": 16.0, "n_nodes": 513 } }"#).unwrap();
    let out = tmp.path().join("run");
    invoke(&["solve", "--config", cfg.to_str().unwrap(), "--beta", "0.9", "--out", &out_arg(&out)]).unwrap();
    let m = manifest(&out);
    assert_eq!(m["config"]["beta"], 0.9);
    assert_eq!(m["config"]["grid"]["n_nodes"], 513);
}

#[test]
fn weight_above_the_threshold_is_a_configuration_error() {
    let tmp = TempDir::new().unwrap();
    let err = invoke(&["solve", "--beta", "0.2", "--tau", "0.9", "--out", &out_arg(tmp.path())]).unwrap_err();
    assert_eq!(err.exit_code(), 1);
    assert!(!tmp.path().join("manifest.json").exists());
}

#[test]
fn unknown_config_fields_are_rejected() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{ "beta": 0.5, "betta": 0.7 }"#).unwrap();
    let err = invoke(&["solve", "--config", cfg.to_str().unwrap(), "--out", &out_arg(tmp.path())]).unwrap_err();
    assert!(matches!(err, CliError::Config(_)));
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn exit_code_taxonomy() {
    let code = |e: Error| CliError::from(e).exit_code();
    assert_eq!(code(Error::InvalidParameter("x".into())), 1);
    assert_eq!(code(Error::Parse("x".into())), 1);
    assert_eq!(code(Error::NewtonDiverged { iterations: 3, residual: 1.0 }), 2);
    assert_eq!(code(Error::PositivityLost { iteration: 1 }), 3);
    assert_eq!(code(Error::NonPositiveMetric { node: 0, t: 0.0 }), 3);
    assert_eq!(code(Error::PathStalled { last_tau: 0.1, min_step: 1e-6 }), 4);
    assert_eq!(code(Error::SingularSystem { row: 2 }), 5);
    assert_eq!(code(Error::CoverInfeasible { exponent: 1, sum: 2.0 }), 5);
    assert_eq!(CliError::from(std::io::Error::other("x")).exit_code(), 6);
}

#[test]
fn futaki_of_the_round_metric_vanishes() {
    let tmp = TempDir::new().unwrap();
    invoke(&["futaki", "--out", &out_arg(tmp.path())]).unwrap();
    let csv = fs::read_to_string(tmp.path().join("futaki.csv")).unwrap();
    for name in ["from_ricci_potential", "from_hamiltonian"] {
        let v: f64 = column(&csv, name)[0].parse().unwrap();
        assert!(v.abs() <= 1e-10, "{name}: {v}");
    }
}

#[test]
fn futaki_reads_a_solved_profile() {
    let tmp = TempDir::new().unwrap();
    let solved = tmp.path().join("solved");
    invoke(&["solve", "--beta", "1", "--delta", "1e-2", "--tau", "0.5", "--grid-N", "1025", "--out", &out_arg(&solved)])
        .unwrap();
    let metric = solved.join("solution.csv");
    let out = tmp.path().join("futaki");
    invoke(&["futaki", "--metric", metric.to_str().unwrap(), "--out", &out_arg(&out)]).unwrap();
    let csv = fs::read_to_string(out.join("futaki.csv")).unwrap();
    let v: f64 = column(&csv, "from_hamiltonian")[0].parse().unwrap();
    assert!(v.abs() <= 1e-6, "{v}");
    assert_eq!(manifest(&out)["grid"]["n_nodes"], 1025);
}

#[test]
fn malformed_profiles_map_to_exit_codes() {
    let tmp = TempDir::new().unwrap();
    let out = out_arg(&tmp.path().join("out"));
    let header = tmp.path().join("header.csv");
    fs::write(&header, "t,phi\n0,1\n").unwrap();
    assert_eq!(invoke(&["futaki", "--metric", header.to_str().unwrap(), "--out", &out]).unwrap_err().exit_code(), 1);

    let negative = tmp.path().join("negative.csv");
    let mut s = String::from("t,phi_prime,phi_doubleprime\n");
    for i in 0..17 {
        let t = -8.0 + i as f64;
        let pdd = if i == 8 { -0.1 } else { 0.5 / (t / 2.0).cosh().powi(2) };
        s.push_str(&format!("{t},{},{pdd}\n", 1.0 + (t / 2.0).tanh()));
    }
    fs::write(&negative, s).unwrap();
    assert_eq!(invoke(&["futaki", "--metric", negative.to_str().unwrap(), "--out", &out]).unwrap_err().exit_code(), 3);

    let missing = tmp.path().join("missing.csv");
    assert_eq!(invoke(&["futaki", "--metric", missing.to_str().unwrap(), "--out", &out]).unwrap_err().exit_code(), 6);
}

#[test]
fn capacity_reports_energy_and_bounds() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("cap");
    let line = invoke(&["capacity", "--n", "1", "--eps", "0.1", "--beta-bar", "0.2", "--out", &out_arg(&out)]).unwrap();
    assert!(line.contains("within eps true"), "{line}");
    let csv = fs::read_to_string(out.join("capacity.csv")).unwrap();
    let ell: f64 = column(&csv, "neg_log_delta")[0].parse().unwrap();
    assert!((ell - 10.0).abs() < 1e-12);
    let energy: f64 = column(&csv, "energy")[0].parse().unwrap();
    let coarea: f64 = column(&csv, "energy_coarea")[0].parse().unwrap();
    assert!((energy / coarea - 1.0).abs() <= 1e-6);
    let cutoff = fs::read_to_string(out.join("cutoff.csv")).unwrap();
    let values: Vec<f64> = column(&cutoff, "value").iter().map(|v| v.parse().unwrap()).collect();
    assert_eq!(values.len(), 200);
    assert_eq!(values[0], 0.0);
    assert_eq!(*values.last().unwrap(), 1.0);
    assert!(values.windows(2).all(|w| w[1] >= w[0]));
    assert!(!out.join("cover.json").exists());
}

#[test]
fn capacity_fixed_rule_needs_delta() {
    let tmp = TempDir::new().unwrap();
    let err = invoke(&["capacity", "--rule", "fixed", "--out", &out_arg(tmp.path())]).unwrap_err();
    assert_eq!(err.exit_code(), 1);
    invoke(&["capacity", "--rule", "fixed", "--delta", "1e-3", "--out", &out_arg(tmp.path())]).unwrap();
    let m = manifest(tmp.path());
    assert!((m["summary"]["neg_log_delta"].as_f64().unwrap() - 1e3f64.ln()).abs() < 1e-12);
}

#[test]
fn capacity_cover_records_its_seed() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{ "n": 2, "beta_bar": 0.6, "cover": { "eps0": 0.2, "region_radius": 0.5, "samples_per_ball": 2000 } }"#)
        .unwrap();
    let out = tmp.path().join("cover");
    invoke(&["capacity", "--config", cfg.to_str().unwrap(), "--seed", "9", "--out", &out_arg(&out)]).unwrap();
    let m = manifest(&out);
    assert_eq!(m["seed"], 9);
    let cover: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("cover.json")).unwrap()).unwrap();
    assert_eq!(cover["seed"], 9);
    assert!(cover["energy"].as_f64().unwrap() > 0.0);
}

#[test]
fn volume_scan_with_tube() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{ "center": { "kind": "flat", "n": 1, "beta_bar": 0.5, "rho0": 0.0 }, "radii": [0.1, 1.0],
             "tube": { "n": 2, "beta_bar": 0.7, "annulus": { "inner": 1.0, "outer": 2.0, "height": 1.0 } } }"#,
    )
    .unwrap();
    invoke(&["volume-scan", "--config", cfg.to_str().unwrap(), "--out", &out_arg(tmp.path())]).unwrap();
    let csv = fs::read_to_string(tmp.path().join("volume_ratio.csv")).unwrap();
    for v in column(&csv, "value") {
        assert!((v.parse::<f64>().unwrap() - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }
    let m = manifest(tmp.path());
    assert!((m["summary"]["tube_exponent"].as_f64().unwrap() - 2.0).abs() <= 0.05);
    assert!(m["grid"].is_null());
}

#[test]
fn log_futaki_table() {
    let tmp = TempDir::new().unwrap();
    invoke(&["log-futaki", "--grid-N", "1025", "--out", &out_arg(tmp.path())]).unwrap();
    let csv = fs::read_to_string(tmp.path().join("obstruction.csv")).unwrap();
    let flags = column(&csv, "flag");
    let ids = column(&csv, "config_id");
    assert_eq!(flags.len(), 8);
    for (id, flag) in ids.iter().zip(&flags) {
        let expected = if id == "football" { "UNOBSTRUCTED" } else { "OBSTRUCTED" };
        assert_eq!(flag, expected);
    }
}

#[test]
fn jobs_flag_is_validated() {
    let tmp = TempDir::new().unwrap();
    let err = invoke(&["--jobs", "0", "futaki", "--out", &out_arg(tmp.path())]).unwrap_err();
    assert_eq!(err.exit_code(), 1);
    let cli = Cli::try_parse_from(["conic-ke", "capacity", "--jobs", "3"]).unwrap();
    assert_eq!(cli.jobs, Some(3));
}

#[test]
fn unknown_rule_is_rejected_by_the_parser() {
    assert!(Cli::try_parse_from(["conic-ke", "capacity", "--rule", "guess"]).is_err());
}
