//! End-to-end runs of the `cmac` binary.

use std::path::Path;
use std::process::{Command, Output};

use cmac_core::channel::ChannelState;
use cmac_core::montecarlo::CSV_HEADER;
use cmac_core::peak_solver::{solve_extreme_search, PeakConstraints};
use cmac_core::rate::NoisePower;
use serde_json::Value;

fn cmac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cmac"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

const SOLVE: [&str; 11] = [
    "solve", "--h", "2,1", "--g", "1,1", "--ppk", "1,1", "--ipk", "1.5", "--sigma2", "1",
];

#[test]
fn solve_extreme_reference_instance() {
    let out = cmac(&[&SOLVE[..], &["--algo", "extreme"]].concat());
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!((v["rate"].as_f64().unwrap() - 1.098612).abs() < 1e-6);
    assert_eq!(v["alloc"], serde_json::json!([1.0, 0.0]));
}

#[test]
fn solve_dtdma_reports_condition() {
    let out = cmac(&[&SOLVE[..], &["--algo", "dtdma"]].concat());
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["alloc"], serde_json::json!([1.0, 0.0]));
    assert_eq!(v["condition_held"], true);
}

#[test]
fn solve_output_matches_library_call() {
    let out = cmac(&SOLVE);
    let s = ChannelState::new(vec![2.0, 1.0], vec![1.0, 1.0]).unwrap();
    let c = PeakConstraints::new(vec![1.0, 1.0], 1.5).unwrap();
    let lib = solve_extreme_search(&s, &c, NoisePower::UNIT).unwrap();
    assert_eq!(json(&out), serde_json::to_value(&lib).unwrap());
}

#[test]
fn solve_without_g_is_a_usage_error() {
    let out = cmac(&["solve", "--h", "2,1", "--ppk", "1", "--ipk", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn solver_precondition_failure_is_structured() {
    // h and g orders disagree, so the ordered solver refuses.
    let out = cmac(&[
        "solve", "--algo", "sorted", "--h", "2,1", "--g", "2,0.5", "--ppk", "1", "--ipk", "1",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out)["error"]["kind"], "precondition");
    let out = cmac(&[
        "solve", "--h", "2,x", "--g", "1,1", "--ppk", "1", "--ipk", "1",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out)["error"]["kind"], "invalid_input");
}

const SIM: [&str; 13] = [
    "simulate",
    "--k",
    "3",
    "--ipk-db",
    "0",
    "--ppk-db",
    "-10:20:10",
    "--rounds",
    "400",
    "--seed",
    "42",
    "--algos",
    "optimal,dtdma,sic-op",
];

#[test]
fn simulate_is_deterministic_and_well_formed() {
    let a = cmac(&SIM);
    let b = cmac(&SIM);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    // 4 sweep points × (3 policies + the SIC row).
    assert_eq!(lines.count(), 16);
    assert!(text.contains(",sic-op@sic,"));
}

#[test]
fn simulate_writes_json_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let out = cmac(&[&SIM[..], &["--out", path.to_str().unwrap()]].concat());
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["points"].as_array().unwrap().len(), 4);
    assert!(v["metadata"]["generated_at"].is_u64());
    assert!(String::from_utf8(out.stdout).unwrap().contains("sweep_db"));
}

#[test]
fn simulate_rejects_zero_rounds() {
    let out = cmac(&["simulate", "--k", "2", "--ppk-db", "0", "--rounds", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unwritable_output_is_an_io_error() {
    let out = cmac(&[
        "simulate",
        "--k",
        "2",
        "--ppk-db",
        "0",
        "--rounds",
        "10",
        "--out",
        "/nonexistent/dir/r.csv",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(json(&out)["error"]["kind"], "io");
}

#[test]
fn simulate_fixed_state_single_round() {
    let out = cmac(&[
        "simulate",
        "--fixed-h",
        "1.3",
        "--fixed-g",
        "0.4",
        "--ppk-db",
        "0",
        "--ipk-db",
        "10",
        "--rounds",
        "1",
        "--algos",
        "optimal",
        "--format",
        "json",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    let rate = v["points"][0]["results"][0]["mean_rate_nats"]
        .as_f64()
        .unwrap();
    assert!((rate - 2.3f64.ln()).abs() < 1e-12);
}

#[test]
fn simulate_average_policies() {
    let out = cmac(&[
        "simulate", "--k", "2", "--pav-db", "0", "--iav-db", "0", "--rounds", "2000", "--seed", "5",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(
        text.contains(",avg,")
            && text.contains(",avg-constant,")
            && text.contains(",avg-round-robin,")
    );
}

#[test]
fn compare_emits_aligned_columns() {
    let out = cmac(&[
        "compare", "--k", "3", "--ppk-db", "-10,20", "--rounds", "300", "--seed", "1",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let header = text.lines().next().unwrap();
    assert!(header.starts_with("sweep_db,optimal_nats,optimal_stderr,dtdma_nats"));
    assert!(header.contains("gap_dtdma_sic_op"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn prob_dtdma_single_user_point() {
    let out = cmac(&[
        "prob-dtdma",
        "--k",
        "1:3",
        "--ppk-db",
        "60",
        "--ipk-db",
        "0",
        "--rounds",
        "10000",
        "--seed",
        "7",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("k,ppk_db,probability,stderr,rounds,seed")
    );
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 3);
    assert!((rows[0][2] - 0.368).abs() <= 0.015, "{}", rows[0][2]);
    assert!(rows.windows(2).all(|w| w[1][2] >= w[0][2]));
}

#[test]
fn avg_solve_constant_channel() {
    let out = cmac(&[
        "avg-solve",
        "--fixed-h",
        "1",
        "--fixed-g",
        "1",
        "--pav",
        "1",
        "--iav",
        "1e9",
        "--rounds",
        "1000",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let v = json(&out);
    assert!((v["report"]["avg_power"][0].as_f64().unwrap() - 1.0).abs() <= 1e-3);
    assert!((v["policy"]["duals"]["lambda"][0].as_f64().unwrap() - 0.5).abs() <= 1e-3);
}

#[test]
fn avg_solve_fading_is_single_user() {
    let out = cmac(&[
        "avg-solve",
        "--k",
        "2",
        "--pav",
        "1",
        "--iav",
        "1",
        "--rounds",
        "5000",
        "--seed",
        "3",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["report"]["dtdma_structure"], true);
    assert_eq!(v["report"]["converged"], true);
}

#[test]
fn avg_solve_iteration_cap_exits_4() {
    let out = cmac(&[
        "avg-solve",
        "--k",
        "2",
        "--pav",
        "1",
        "--iav",
        "1",
        "--rounds",
        "2000",
        "--max-iter",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(4));
    let v = json(&out);
    assert_eq!(v["error"]["kind"], "non_convergence");
    assert!(v["error"]["report"]["residuals"].is_array());
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.cfg");
    std::fs::write(
        &cfg,
        "# experiment manifest\nk = 3\nipk-db = 0\nppk-db = -10:20:10\nrounds = 50\nseed = 42\nalgos = optimal,dtdma,sic-op\n",
    )
    .unwrap();
    let from_cfg = cmac(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--rounds",
        "400",
    ]);
    assert_eq!(from_cfg.status.code(), Some(0));
    assert_eq!(from_cfg.stdout, cmac(&SIM).stdout);
    let missing = cmac(&[
        "simulate",
        "--config",
        Path::new("/nonexistent.cfg").to_str().unwrap(),
    ]);
    assert_eq!(missing.status.code(), Some(3));
}
