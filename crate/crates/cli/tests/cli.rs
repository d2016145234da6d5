use std::fs;
use std::process::{Command, Output};

use clap::Parser;
use isingtau::connect::{CURVE_NUS, CURVE_SIGMA_SAMPLES};
use isingtau::sinhg;
use isingtau::tau::DEFAULT_H_NU;
use isingtau_cli::{Cli, Command as Sub};

fn isingtau(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_isingtau"))
        .args(args)
        .env_remove("CONNECT_TOL")
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn zero_lambda_trajectory_is_zero() {
    let o = isingtau(&["solve", "--nu", "0", "--lambda", "0"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().skip(2).collect();
    assert!(!rows.is_empty());
    for r in rows {
        let v: Vec<f64> = r.split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!((v[1], v[2]), (0.0, 0.0));
    }
}

#[test]
fn solve_reaches_small_t_slope() {
    let o = isingtau(&["solve", "--nu", "0.5", "--sigma", "0.4", "--t-min", "0.01"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let last: Vec<f64> = text
        .lines()
        .last()
        .unwrap()
        .split(',')
        .map(|x| x.parse().unwrap())
        .collect();
    assert!((last[0] - 0.01).abs() < 1e-12);
    assert!((last[2] - 0.4).abs() < 0.05, "p = {}", last[2]);
}

#[test]
fn out_of_range_sigma_exits_two() {
    let o = isingtau(&["solve", "--nu", "0", "--sigma", "1.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sigma < 1 + 2 nu"));
}

#[test]
fn connect_examples() {
    let o = isingtau(&["connect", "--nu", "0", "--lambda", "0.31830988618"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((v["A"].as_f64().unwrap() - 0.5424).abs() < 1e-4);

    let o = isingtau(&["connect", "--nu", "0.5", "--sigma", "0.4"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let b = isingtau::connect::coefficient_b(0.5, 0.4).unwrap();
    assert_eq!(v["B"].as_f64().unwrap(), b);

    let o = isingtau(&["connect", "--nu", "-0.4", "--sigma", "0.9"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn connect_fit_agrees() {
    let o = isingtau(&["connect", "--nu", "0.5", "--sigma", "0.4", "--fit"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let (a, a_fit) = (
        v["A"].as_f64().unwrap(),
        v["fit"]["A_fit"].as_f64().unwrap(),
    );
    assert!((a_fit / a - 1.0).abs() < 1e-3);
}

#[test]
fn verify_filters_and_exit_status() {
    let o = isingtau(&["verify", "--only", "wu"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 1);

    let o = isingtau(&["verify", "--only", "tracy", "--format", "json"]);
    assert_eq!(
        o.status.code(),
        Some(1),
        "the s = 0.05 point misses its tolerance"
    );
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let records = v["records"].as_array().unwrap();
    assert_eq!(records.len(), 3);
    assert!(records.iter().all(|r| r["criterion"] == "tracy"));

    let o = isingtau(&["verify", "--only", "nonsense"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn output_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let paths: Vec<_> = (0..2)
        .map(|i| dir.path().join(format!("tau{i}.csv")))
        .collect();
    for p in &paths {
        let o = isingtau(&[
            "tau",
            "--nu",
            "0.5",
            "--sigma",
            "0.4",
            "--format",
            "csv",
            "-o",
            p.to_str().unwrap(),
        ]);
        assert!(o.status.success());
    }
    let (a, b) = (fs::read(&paths[0]).unwrap(), fs::read(&paths[1]).unwrap());
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

#[test]
fn tolerance_from_environment() {
    let o = Command::new(env!("CARGO_BIN_EXE_isingtau"))
        .args(["solve", "--nu", "0", "--sigma", "0.5", "--format", "json"])
        .env("CONNECT_TOL", "1e-9")
        .output()
        .unwrap();
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["header"]["tol"].as_f64(), Some(1e-9));

    let o = isingtau(&["solve", "--nu", "0", "--sigma", "0.5", "--tol", "0.5"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_and_f2() {
    let o = isingtau(&["sweep"]);
    assert!(o.status.success());
    assert_eq!(
        stdout(&o).lines().count(),
        1 + CURVE_NUS.len() * CURVE_SIGMA_SAMPLES
    );

    let o = isingtau(&["f2", "--t", "5", "--nu", "0"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["value"].as_f64().unwrap() < 0.0);
}

#[test]
fn defaults_come_from_the_library() {
    let cli = Cli::try_parse_from(["isingtau", "tau", "--nu", "0", "--sigma", "0.5"]).unwrap();
    let Sub::Tau(a) = cli.command else {
        panic!("tau expected")
    };
    if std::env::var_os("CONNECT_TOL").is_none() {
        assert_eq!(a.integration.tol, sinhg::DEFAULT_TOL);
    }
    assert_eq!(a.integration.t_min, sinhg::DEFAULT_T_MIN);
    assert_eq!(a.integration.t0, None);
    assert_eq!(a.h_nu, DEFAULT_H_NU);

    let cli = Cli::try_parse_from(["isingtau", "sweep"]).unwrap();
    let Sub::Sweep(a) = cli.command else {
        panic!("sweep expected")
    };
    assert_eq!(a.nus, CURVE_NUS.to_vec());
    assert_eq!(a.n_sigma, CURVE_SIGMA_SAMPLES);
}
