use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};

fn stochnls(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stochnls"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .env_remove("STOCHNLS_WORKERS")
        .output()
        .expect("binary runs")
}

fn payload(path: &Path) -> String {
    let text = fs::read_to_string(path).unwrap();
    if path.extension().is_some_and(|e| e == "json") {
        let doc: Value = serde_json::from_str(&text).unwrap();
        doc["data"].to_string()
    } else {
        text.lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>().join("\n")
    }
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &[&str] = &["simulate", "--n", "15", "--t", "0.02", "--dt", "1e-3", "--seed", "9", "--dump-every", "4"];

#[test]
fn simulate_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(stochnls(a.path(), SMALL).status.success());
    assert!(stochnls(b.path(), SMALL).status.success());
    for f in ["functionals.csv", "trajectory.csv"] {
        assert_eq!(payload(&a.path().join(f)), payload(&b.path().join(f)), "{f}");
    }
    assert_eq!(
        fs::read(a.path().join("trajectory.bin")).unwrap(),
        fs::read(b.path().join("trajectory.bin")).unwrap()
    );

    let c = tempfile::tempdir().unwrap();
    let mut other_seed = SMALL.to_vec();
    other_seed[8] = "10";
    assert!(stochnls(c.path(), &other_seed).status.success());
    assert_ne!(payload(&a.path().join("trajectory.csv")), payload(&c.path().join("trajectory.csv")));
}

#[test]
fn manifest_digests_match_files() {
    let d = tempfile::tempdir().unwrap();
    let o = stochnls(d.path(), &[SMALL, &["--dump-noise"]].concat());
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest: Value = serde_json::from_str(&fs::read_to_string(d.path().join("manifest.json")).unwrap()).unwrap();
    let outputs = manifest["outputs"].as_object().unwrap();
    for name in ["functionals.csv", "trajectory.csv", "trajectory.bin", "noise.csv", "summary.txt"] {
        let bytes = fs::read(d.path().join(name)).unwrap();
        assert_eq!(outputs[name], Value::from(hex::encode(Sha256::digest(&bytes))), "{name}");
    }
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["seed"], 9);
    assert_eq!(manifest["config"]["n"], "15");
    let head = fs::read_to_string(d.path().join("functionals.csv")).unwrap();
    assert!(head.lines().nth(1).unwrap().starts_with("# manifest {"));
}

#[test]
fn zero_final_time_keeps_initial_state() {
    let d = tempfile::tempdir().unwrap();
    let o = stochnls(d.path(), &["simulate", "--n", "7", "--t", "0", "--initial", "sine:1:0.5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let traj = payload(&d.path().join("trajectory.csv"));
    let rows: Vec<&str> = traj.lines().skip(1).collect();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].starts_with("0,0.0000000000000000e0,"));
    let functionals = payload(&d.path().join("functionals.csv"));
    assert_eq!(functionals.lines().count(), 2);
}

#[test]
fn config_file_and_flags() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("run.ini");
    fs::write(&cfg, "seed = 4\nt = 0.01\ndt = 1e-3\n[simulate]\nn = 9\n").unwrap();
    let out = d.path().join("out");
    let o = stochnls(&out, &["simulate", "--config", cfg.to_str().unwrap(), "--n", "11"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest: Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["n"], "11");
    assert_eq!(manifest["config"]["t"], "0.01");
    assert_eq!(manifest["seed"], 4);

    fs::write(&cfg, "bogus = 1\n").unwrap();
    let o = stochnls(&out, &["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("field `bogus`"), "{}", stderr(&o));
}

#[test]
fn configuration_errors_exit_2() {
    let d = tempfile::tempdir().unwrap();
    let o = stochnls(d.path(), &["converge", "--coarse", "15"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("need ≥ 3 grids"), "{}", stderr(&o));
    assert!(stderr(&o).contains("field `coarse`"));

    let o = stochnls(d.path(), &["simulate", "--dt", "-1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("field `dt`"), "{}", stderr(&o));

    let o = stochnls(d.path(), &["simulate", "--lambda", "2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("field `lambda`"));

    let o = stochnls(d.path(), &["converge", "--coarse", "15,31,63", "--fine", "100"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn blow_up_exits_3_with_partial_outputs() {
    let d = tempfile::tempdir().unwrap();
    let o = stochnls(
        d.path(),
        &[
            "simulate", "--lambda", "1", "--initial", "sech:40:0.5:0.1", "--n", "127", "--t", "0.05", "--dt", "1e-4",
            "--modes", "0", "--blowup-threshold", "60",
        ],
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let summary = fs::read_to_string(d.path().join("summary.txt")).unwrap();
    assert!(summary.contains("status: stopped"));
    let traj = payload(&d.path().join("trajectory.csv"));
    assert!(traj.lines().count() >= 3);
    assert!(d.path().join("manifest.json").exists());
}

#[test]
fn noise_check_passes_for_one_mode() {
    let d = tempfile::tempdir().unwrap();
    let o = stochnls(d.path(), &["noise-check", "--modes", "1", "--samples", "20000", "--seed", "5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("pass"));
}

#[test]
fn identical_initial_data_give_zero_error() {
    let d = tempfile::tempdir().unwrap();
    let o = stochnls(
        d.path(),
        &[
            "depend", "--study", "initial", "--n", "15", "--t", "0.02", "--dt", "1e-3", "--samples", "4", "--initial",
            "sine:1:1", "--v0", "sine:1:1", "--workers", "2", "--format", "json",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let doc: Value = serde_json::from_str(&fs::read_to_string(d.path().join("dependence.json")).unwrap()).unwrap();
    assert_eq!(doc["data"]["rows"][0]["error"], 0.0);
    assert_eq!(doc["data"]["rows"][0]["input_distance"], 0.0);
}

#[test]
fn residual_order_two() {
    let d = tempfile::tempdir().unwrap();
    let o = stochnls(d.path(), &["residual", "--profile", "sine:2:1", "--ladder", "31,63,127,255", "--format", "json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let doc: Value = serde_json::from_str(&fs::read_to_string(d.path().join("residual.json")).unwrap()).unwrap();
    let slope = doc["data"]["summary"]["fit"]["slope"].as_f64().unwrap();
    assert!((slope - 2.0).abs() < 0.02, "{slope}");
}

#[test]
fn converge_payload_independent_of_workers() {
    let args = [
        "converge", "--coarse", "7,15,31", "--fine", "255", "--samples", "6", "--t", "0.02", "--dt", "1e-3", "--bootstrap",
        "200", "--moments", "1,2", "--format", "json", "--seed", "3",
    ];
    let mut payloads = Vec::new();
    for w in ["1", "2", "8"] {
        let d = tempfile::tempdir().unwrap();
        let o = stochnls(d.path(), &[&args[..], &["--workers", w]].concat());
        assert!(o.status.success(), "{}", stderr(&o));
        payloads.push(payload(&d.path().join("convergence.json")));
        let manifest: Value = serde_json::from_str(&fs::read_to_string(d.path().join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["workers"], w.parse::<u64>().unwrap());
    }
    assert_eq!(payloads[0], payloads[1]);
    assert_eq!(payloads[0], payloads[2]);
    let doc: Value = serde_json::from_str(&format!("{{\"d\":{}}}", payloads[0])).unwrap();
    assert_eq!(doc["d"]["rows"].as_array().unwrap().len(), 6);
}
