use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn scratch(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("vcsim-cli-{}-{tag}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn vcsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vcsim")).args(args).output().expect("vcsim runs")
}

fn simulate(name: &str, out: &Path) -> Output {
    vcsim(&[
        "--config",
        scenario(name).to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
        "--quiet",
        "simulate",
    ])
}

#[test]
fn inflexible_overload_exits_with_collapse() {
    let out = scratch("case1");
    let run = simulate("case1.json", &out);
    assert_eq!(run.status.code(), Some(2), "{}", String::from_utf8_lossy(&run.stderr));
    let trace = fs::read_to_string(out.join("case1/trace.csv")).unwrap();
    assert!(trace.starts_with("t,v,P_tot,g_1,P_1,dP_1,g_2,P_2,dP_2,g_3,P_3,dP_3\n"));
    let last: Vec<f64> = trace.lines().last().unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert!(last[1] < 0.02 * 2.0);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("case1/report.json")).unwrap()).unwrap();
    assert_eq!(report["termination"]["reason"], "collapsed");
    assert!(out.join("case1/report.txt").exists());
}

#[test]
fn flexible_overload_converges() {
    let out = scratch("case2");
    let run = simulate("case2.json", &out);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("case2/report.json")).unwrap()).unwrap();
    assert_eq!(report["termination"]["reason"], "converged");
    let v = report["final"]["flow"]["voltage"].as_f64().unwrap();
    assert!((v - 1.0).abs() < 1e-6);
    assert!(report["curtailment"]["max_violation"].as_f64().unwrap() < 1e-6);
}

#[test]
fn exhausted_flexibility_exits_with_collapse() {
    let out = scratch("case3b");
    assert_eq!(simulate("case3b.json", &out).status.code(), Some(2));
}

#[test]
fn traces_are_byte_identical() {
    let (a, b) = (scratch("det-a"), scratch("det-b"));
    assert_eq!(simulate("case3a.json", &a).status.code(), Some(0));
    assert_eq!(simulate("case3a.json", &b).status.code(), Some(0));
    let read = |dir: &Path, f: &str| fs::read(dir.join("case3a").join(f)).unwrap();
    assert_eq!(read(&a, "trace.csv"), read(&b, "trace.csv"));
    assert_eq!(read(&a, "report.json"), read(&b, "report.json"));
}

#[test]
fn errors_exit_with_one() {
    let dir = scratch("errors");
    let missing = dir.join("nope.json");
    let run = vcsim(&["--config", missing.to_str().unwrap(), "simulate"]);
    assert_eq!(run.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&run.stderr).contains("error"));

    let bad = dir.join("bad.json");
    fs::write(
        &bad,
        r#"{"network": {"E": 2, "g_l": 1, "R": 3}, "loads": [{"kind": "inflexible", "P0": [[0, 0.1]]}], "simulation": {"t_end": 1}}"#,
    )
    .unwrap();
    let run = vcsim(&["--config", bad.to_str().unwrap(), "simulate"]);
    assert_eq!(run.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&run.stderr).contains("unknown field"));

    let case1 = scenario("case1.json");
    let case1 = case1.to_str().unwrap();
    let run = vcsim(&["--config", case1, "sweep", "--parameter", "voltage", "--from", "0", "--to", "1"]);
    assert_eq!(run.status.code(), Some(1));
    let run = vcsim(&["--config", case1, "game", "--state", "0.1,0.2"]);
    assert_eq!(run.status.code(), Some(1));
    let run = vcsim(&["--config", case1, "equilibria", "--at-time", "1000"]);
    assert_eq!(run.status.code(), Some(1));
    assert_eq!(vcsim(&["simulate"]).status.code(), Some(1));
}

#[test]
fn equilibria_table_and_json() {
    let case2 = scenario("case2.json");
    let run = vcsim(&["--config", case2.to_str().unwrap(), "equilibria", "--at-time", "400"]);
    assert_eq!(run.status.code(), Some(0));
    let text = String::from_utf8(run.stdout).unwrap();
    assert!(text.contains("{1,2,3}"));
    assert!(text.contains("boundary"));

    let run = vcsim(&["--config", case2.to_str().unwrap(), "equilibria", "--at-time", "0", "--json"]);
    let json: serde_json::Value = serde_json::from_slice(&run.stdout).unwrap();
    let rows = json["rows"].as_array().unwrap();
    let interior: Vec<_> = rows.iter().filter(|r| r["gated"] == "{}" && r["branch"] == "low").collect();
    assert_eq!(interior.len(), 1);
    assert_eq!(interior[0]["classification"], "stable");
}

#[test]
fn game_at_zero_state_is_not_lne() {
    let case1 = scenario("case1.json");
    let run = vcsim(&["--config", case1.to_str().unwrap(), "game", "--state", "0,0,0", "--json"]);
    assert_eq!(run.status.code(), Some(0));
    let json: serde_json::Value = serde_json::from_slice(&run.stdout).unwrap();
    assert_eq!(json["check"]["is_lne"], false);
    let gradient: Vec<f64> = json["check"]["gradient"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert_eq!(gradient, vec![0.2, 0.25, 0.3]);
}

#[test]
fn stability_at_state() {
    let case1 = scenario("case1.json");
    let run = vcsim(&["--config", case1.to_str().unwrap(), "stability", "--state", "0.1,0.1,0.1"]);
    assert_eq!(run.status.code(), Some(0));
    let text = String::from_utf8(run.stdout).unwrap();
    assert!(text.contains("verdict     stable"));
}

#[test]
fn sweep_finds_the_fold() {
    let out = scratch("sweep");
    let case1 = scenario("case1.json");
    let run = vcsim(&[
        "--config",
        case1.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
        "sweep",
        "--parameter",
        "p0-scale",
        "--from",
        "0",
        "--to",
        "1.2",
        "--steps",
        "24",
    ]);
    assert_eq!(run.status.code(), Some(0));
    let text = String::from_utf8(run.stdout).unwrap();
    // final demand 1.1 = 1.1 P_max, so the ungated roots merge at scale 1/1.1
    assert!(text.contains("fold at 9.090909090909e-1"), "{text}");
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 26);
}
