use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn qmeas(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qmeas")).args(args).env_remove("QMEAS_DENSE_CAP").output().unwrap()
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn standard_table_is_uniform_at_depth_five() {
    let v = json(&qmeas(&["measure", "--tau-depth", "5"]));
    let table = &v["result"]["table"];
    let values = table["values"].as_array().unwrap();
    assert_eq!(values.len(), 32);
    assert!(values.iter().all(|e| e["p"].as_f64() == Some(1.0 / 32.0)));
    assert_eq!(table["sum"].as_f64(), Some(1.0));
    assert_eq!(v["pass"], Value::Bool(true));
    assert_eq!(v["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn hadamard_all_zeros_prefix() {
    let v = json(&qmeas(&["measure", "--basis", "hadamard", "--tau", "00000"]));
    let q = &v["result"]["queries"][0];
    for path in ["dense", "factored"] {
        assert!((q[path].as_f64().unwrap() - 11.0 / 256.0).abs() < 1e-15);
    }
}

#[test]
fn oracle_compare_through_depth_eleven() {
    let v = json(&qmeas(&["measure", "--oracle-compare", "--depth", "11"]));
    let o = &v["result"]["oracle_compare"];
    assert_eq!(o["queries"].as_u64(), Some(4095));
    assert!(o["max_abs_diff"].as_f64().unwrap() <= 1e-12);
}

#[test]
fn dense_cap_gives_exit_three() {
    let out = Command::new(env!("CARGO_BIN_EXE_qmeas"))
        .args(["measure", "--oracle-compare", "--depth", "11"])
        .env("QMEAS_DENSE_CAP", "8")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dense cap"));
    assert_eq!(qmeas(&["--dense-cap", "8", "measure", "--oracle-compare"]).status.code(), Some(3));
}

#[test]
fn block_five_eigenstructure() {
    let v = json(&qmeas(&["state", "--eigen", "5"]));
    let eig = v["result"]["eigen"][0]["eigenvalues"].as_array().unwrap();
    let mult = |x: f64| {
        eig.iter().find(|e| (e["value"].as_f64().unwrap() - x).abs() < 1e-12).map(|e| e["multiplicity"].as_str().unwrap().to_string())
    };
    assert_eq!(mult(0.0).as_deref(), Some("6"));
    assert_eq!(mult(1.0 / 32.0).as_deref(), Some("20"));
    assert_eq!(mult(1.0 / 16.0).as_deref(), Some("6"));
}

#[test]
fn general_family_validation() {
    let dir = tempfile::tempdir().unwrap();
    let h = write(dir.path(), "h.json", r#"{"5":1,"6":2}"#);
    let g = write(dir.path(), "g.json", r#"{"5":0.03125,"6":0.015625}"#);
    let v = json(&qmeas(&["state", "--general", &h, &g, "--check-depth", "11"]));
    assert_eq!(v["pass"], Value::Bool(true));

    let bad = write(dir.path(), "bad.json", r#"{"5":0.5,"6":0.015625}"#);
    let out = qmeas(&["state", "--general", &h, &bad]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("n = 5"));

    let out = qmeas(&["measure", "--general", &h, &g, "--tau", "000000000000"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sampling_is_reproducible() {
    let args = ["sample", "--bits", "1500", "--seeds", "7..9", "--basis", "hadamard"];
    let a = qmeas(&args);
    let b = qmeas(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let lines: Vec<&[u8]> = a.stdout.split(|&c| c == b'\n').filter(|l| !l.is_empty()).collect();
    assert_eq!(lines.len(), 3);
    assert!(lines.iter().all(|l| l.len() == 1500 && l.iter().all(|c| *c == b'0' || *c == b'1')));
    assert_ne!(lines[0], lines[1]);
}

#[test]
fn sample_files_feed_the_battery() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let v = json(&qmeas(&["sample", "--bits", "2000", "--seed", "3", "--out", out_dir.to_str().unwrap()]));
    assert_eq!(v["seed"], serde_json::json!([3]));
    let bits = out_dir.join("seed-3.bits");
    let sidecar: Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("seed-3.json")).unwrap()).unwrap();
    assert_eq!(sidecar["n_bits"].as_u64(), Some(2000));

    let report = json(&qmeas(&["battery", bits.to_str().unwrap()]));
    assert_eq!(report["result"]["reports"][0]["n_bits"].as_u64(), Some(2000));

    let csv = qmeas(&["battery", "--csv", bits.to_str().unwrap()]);
    let text = String::from_utf8(csv.stdout).unwrap();
    assert!(text.lines().count() >= 9);
}

#[test]
fn empty_stream_is_rejected_by_the_battery() {
    let dir = tempfile::tempdir().unwrap();
    let sample = qmeas(&["sample", "--bits", "0", "--seed", "1"]);
    assert!(sample.status.success());
    let file = write(dir.path(), "empty.bits", std::str::from_utf8(&sample.stdout).unwrap());
    let out = qmeas(&["battery", &file]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("too short"));
}

#[test]
fn witness_first_level() {
    let v = json(&qmeas(&["qmlt", "witness", "--m", "1"]));
    let level = &v["result"]["levels"][0];
    assert_eq!(level["n_m"].as_u64(), Some(9));
    assert_eq!(level["gamma"].as_u64(), Some(35));
    assert!((level["tau"].as_f64().unwrap() - 0.459116399288).abs() < 1e-11);
    assert_eq!(level["evaluation"].as_f64(), Some(1.0));
    assert_eq!(v["result"]["failure"]["fails_at_order_delta"], Value::Bool(true));
}

#[test]
fn witness_budget_is_a_resource_cap() {
    let out = qmeas(&["qmlt", "witness", "--m", "2", "--budget", "10"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn lift_and_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let empty = write(dir.path(), "empty.json", r#"{"levels":{}}"#);
    let v = json(&qmeas(&["qmlt", "lift", "--mlt", &empty]));
    assert_eq!(v["result"]["levels"], serde_json::json!([]));

    let mlt = write(dir.path(), "m.json", r#"{"levels":{"1":{"2":["00"],"3":["000","001"]},"2":{"3":["000"]}}}"#);
    let v = json(&qmeas(&["qmlt", "eval", "--lifted", "--mlt", &mlt, "--state", "mixed"]));
    let failure = &v["result"]["failure"];
    assert_eq!(failure["min_evaluation"].as_f64(), Some(0.125));
    assert_eq!(failure["fails_at_order_delta"], Value::Bool(false));

    let bad = write(dir.path(), "bad.json", r#"{"levels":{"1":{"1":["0","1"]}}}"#);
    assert_eq!(qmeas(&["qmlt", "lift", "--mlt", &bad]).status.code(), Some(2));
}

#[test]
fn verify_commands_pass() {
    for cmd in ["kron-pairing", "quadratic-bounds", "corner-bound"] {
        let v = json(&qmeas(&["verify", cmd, "--n", "5,6,7", "--trials", "50", "--seed", "2"]));
        assert_eq!(v["pass"], Value::Bool(true), "{cmd}");
        assert_eq!(v["seed"].as_u64(), Some(2));
    }
}

#[test]
fn verify_family_reports_products() {
    let dir = tempfile::tempdir().unwrap();
    let h = write(dir.path(), "h.json", r#"{"5":1,"6":2,"7":3}"#);
    let g = write(dir.path(), "g.json", r#"{"5":0.03125,"6":0.015625,"7":0.0078125}"#);
    let v = json(&qmeas(&["verify", "family", "--h", &h, "--g", &g]));
    let rows = v["result"]["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    // g = 2^-n makes each δ factor exactly one
    assert!(rows.iter().all(|r| r["delta_product"].as_f64() == Some(1.0)));
    assert!((rows[0]["support_product"].as_f64().unwrap() - 31.0 / 32.0).abs() < 1e-15);
}

#[test]
fn config_replay_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["measure", "--basis", "hadamard", "--tau", "0101", "--tau-depth", "6"];
    let cfg = qmeas(&[&["--emit-config"][..], &args].concat());
    assert!(cfg.status.success());
    let path = write(dir.path(), "c.json", std::str::from_utf8(&cfg.stdout).unwrap());
    let direct = qmeas(&args);
    let replay = qmeas(&["run", "--config", &path]);
    assert!(direct.status.success());
    assert_eq!(direct.stdout, replay.stdout);
}

#[test]
fn malformed_input_exits_two() {
    assert_eq!(qmeas(&["measure", "--tau", "01x"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"op":"nonsense"}"#);
    assert_eq!(qmeas(&["run", "--config", &cfg]).status.code(), Some(2));
}
