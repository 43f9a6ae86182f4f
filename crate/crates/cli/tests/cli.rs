use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn rknock(args: &[&str], stdin: Option<&[u8]>) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_rknock"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("binary runs");
    {
        let mut pipe = child.stdin.take().unwrap();
        if let Some(bytes) = stdin {
            pipe.write_all(bytes).unwrap();
        }
    }
    child.wait_with_output().unwrap()
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

const FAST: [&str; 4] = ["--method", "equi", "--statistic", "lsm"];

fn simulate(seed: &str) -> Vec<u8> {
    let out =
        rknock(&["simulate", "--seed", seed, "--n", "100", "--p", "10", "--active", "2", "--amplitude", "4"], None);
    assert!(out.status.success());
    out.stdout
}

#[test]
fn simulate_wfdr_report_pipe() {
    let sim = simulate("11");
    let mut args = vec!["wfdr", "--seed", "11", "-B", "8", "--grid", "0.1,0.2,0.4", "--weights", "exp", "--top-m", "2"];
    args.extend(FAST);
    let w = rknock(&args, Some(&sim));
    let wj = json(&w);
    assert_eq!(wj["schema_version"], "1.0");
    assert_eq!(wj["result"]["scores"].as_array().unwrap().len(), 10);
    let rep = json(&rknock(&["report"], Some(&w.stdout)));
    assert_eq!(rep["command"], "report");
    assert_eq!(rep["result"]["source_seed"], 11);
    assert_eq!(rep["result"]["summary"]["table"].as_array().unwrap().len(), 10);
    let csv = rknock(&["report", "--format", "csv"], Some(&w.stdout));
    assert!(String::from_utf8(csv.stdout).unwrap().starts_with("rank,variable,score\n1,"));
}

#[test]
fn thread_count_does_not_change_output() {
    let sim = simulate("3");
    let run = |threads: &str| {
        let mut args = vec!["--threads", threads, "robust-select", "--seed", "5", "-B", "12", "--alpha", "0.3"];
        args.extend(FAST);
        rknock(&args, Some(&sim))
    };
    let one = run("1");
    let four = run("4");
    assert!(one.status.success());
    assert_eq!(one.stdout, four.stdout);
    let j = json(&one);
    for p in j["result"]["probs"].as_array().unwrap() {
        let v = p.as_f64().unwrap() * 12.0;
        assert_eq!(v, v.round());
    }
    assert_eq!(j["result"]["n_sub"], 90);
}

#[test]
fn validation_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"theta": 1.3}"#).unwrap();
    let sim = simulate("1");
    let out = rknock(&["wfdr", "--seed", "1", "--config", cfg.to_str().unwrap()], Some(&sim));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("theta"));

    let out = rknock(&["wfdr"], Some(&sim));
    assert_eq!(out.status.code(), Some(2), "missing seed");

    let out = rknock(&["select", "--seed", "1"], Some(b"a,b,y\n1,2,3\n4,NA,6\n"));
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("row 2") && msg.contains("column b"), "{msg}");

    let out = rknock(&["simulate", "--seed", "1", "--p", "3", "--active", "5"], None);
    assert_eq!(out.status.code(), Some(2));

    let out = rknock(&["report"], Some(b"{\"schema_version\": \"0.0\"}"));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn computation_errors_exit_3() {
    let mut csv = String::from("a,b,y\n");
    for i in 0..30 {
        csv.push_str(&format!("{},{},{}\n", i, 1.0, i * 2));
    }
    let out = rknock(&["select", "--seed", "1"], Some(csv.as_bytes()));
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("zero variance"));
}

#[test]
fn same_seed_gives_identical_bytes() {
    let a = simulate("9");
    let b = simulate("9");
    assert_eq!(a, b);
    assert_ne!(a, simulate("10"));
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn group_pca_and_knockoff_commands() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate("2");
    let groups: String = std::iter::once("variable,group_id\n".to_string())
        .chain((1..=10).map(|j| format!("x{j},{}\n", (j + 1) / 2)))
        .collect();
    let map = write(dir.path(), "groups.csv", &groups);
    let pca = json(&rknock(&["group-pca", "--group-map", &map, "--cap", "2"], Some(&sim)));
    assert_eq!(pca["result"]["groups"].as_array().unwrap().len(), 5);
    assert!(pca["result"]["component_names"][0].as_str().unwrap().starts_with("PC1."));

    let k = json(&rknock(&["knockoff", "--seed", "4", "--method", "asdp"], Some(&sim)));
    assert_eq!(k["result"]["s"].as_array().unwrap().len(), 10);
    assert!(k["result"]["diagnostics"]["total"].as_f64().unwrap().is_finite());

    let g = json(&rknock(
        &[
            "select",
            "--seed",
            "4",
            "--method",
            "group",
            "--statistic",
            "group-lsm",
            "--group-map",
            &map,
            "--alpha",
            "0.5",
        ],
        Some(&sim),
    ));
    assert_eq!(g["result"]["w"].as_array().unwrap().len(), 10);
}

#[test]
fn evaluate_with_dates() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("date,x1,x2,x3,y\n");
    let mut state = 1u64;
    let mut noise = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 33) as f64 / (1u64 << 31) as f64) - 0.5
    };
    for year in 2001..=2006 {
        for month in 1..=12 {
            let (a, b, c) = (noise(), noise(), noise());
            let y = 2.0 * a - b + 0.1 * noise();
            csv.push_str(&format!("{year}-{month:02}-15,{a},{b},{c},{y}\n"));
        }
    }
    let data = write(dir.path(), "data.csv", &csv);
    let cfg = write(
        dir.path(),
        "cfg.json",
        r#"{
          "date_column": "date",
          "evaluation": {
            "schemes": [
              {"kind": "fixed", "train_end": 2004, "test_span": 2},
              {"kind": "expanding_annual", "origins": [2003, 2004], "horizon_years": 2},
              {"kind": "daily_rolling", "train_years": 3, "test_start": "2006-01-01"}
            ],
            "methods": [
              {"selection": {"kind": "none"}, "estimator": "ols"},
              {"selection": {"kind": "none"}, "estimator": "lasso"}
            ],
            "mcs_b": 200
          }
        }"#,
    );
    let out = json(&rknock(&["evaluate", "--seed", "3", "--config", &cfg, "--input", &data], None));
    let rows = out["result"]["forecasts"].as_array().unwrap();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r["leakage_free"] == true));
    assert_eq!(out["result"]["mcs"].as_object().unwrap().len(), 3);
    let rep = rknock(&["report", "--format", "csv"], Some(serde_json::to_string(&out).unwrap().as_bytes()));
    assert!(String::from_utf8(rep.stdout).unwrap().starts_with("scheme,selection,estimator,rmse,mae"));
}
