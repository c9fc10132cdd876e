use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_regret-umdp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_string_lossy().into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// Value printed on the line starting with `key`.
fn reading(text: &str, key: &str) -> f64 {
    text.lines()
        .find(|l| l.starts_with(key))
        .and_then(|l| l.rsplit('=').next())
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or_else(|| panic!("no `{key}` in output:\n{text}"))
}

const TWO_SAMPLE: &str = r#"{
  "states": ["s0", "s1", "g"],
  "actions": ["safe", "risky"],
  "initial": "s0",
  "goals": ["g"],
  "samples": [
    {"transitions": [["s0","safe","s1","1.0","1"], ["s0","risky","g","0.5","1"], ["s0","risky","s0","0.5","1"],
                     ["s1","safe","g","1","1"], ["s1","risky","g","1","0.5"]]},
    {"transitions": [["s0","safe","s1",1.0,1.2], ["s0","risky","g",0.9,1], ["s0","risky","s0",0.1,1],
                     ["s1","safe","g",1,1], ["s1","risky","g",1,3]]}
  ]
}"#;

#[test]
fn generate_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (path(&dir, "a.json"), path(&dir, "b.json"));
    for out in [&a, &b] {
        let res = run(&["generate", "--domain", "medical", "--seed", "7", "--samples", "4", "--candidates", "8", "--out", out]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn single_sample_regret_is_near_zero() {
    let dir = TempDir::new().unwrap();
    let umdp = path(&dir, "one.json");
    let single = r#"{"states":3,"actions":2,"initial":0,"goals":[2],"samples":[{"transitions":[
        [0,0,1,1,1],[0,1,2,"0.5",3],[0,1,0,"0.5",1],[1,0,2,1,1],[1,1,0,1,0.1]]}]}"#;
    fs::write(&umdp, single).unwrap();
    let res = run(&["plan", &umdp, "--method", "reg", "--n", "1", "--kappa", "1e-4", "--out", &path(&dir, "p.json")]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert!(reading(&stdout(&res), "reg(") <= 10.0 * 1e-4);
}

#[test]
fn evaluate_reproduces_plan_regret() {
    let dir = TempDir::new().unwrap();
    let umdp = path(&dir, "two.json");
    fs::write(&umdp, TWO_SAMPLE).unwrap();
    for (method, n) in [("reg", "2"), ("robust", "1"), ("avg", "1")] {
        let policy = path(&dir, &format!("{method}.json"));
        let planned = run(&["plan", &umdp, "--method", method, "--n", n, "--out", &policy]);
        assert!(planned.status.success(), "{}", String::from_utf8_lossy(&planned.stderr));
        let report = path(&dir, &format!("{method}-report.json"));
        let scored = run(&["evaluate", &umdp, "--policy", &policy, "--out", &report]);
        assert!(scored.status.success(), "{}", String::from_utf8_lossy(&scored.stderr));
        let (a, b) = (reading(&stdout(&planned), "reg("), reading(&stdout(&scored), "max_regret"));
        assert!((a - b).abs() < 1e-8, "{method}: plan {a} vs evaluate {b}");
        let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
        assert_eq!(json["per_sample"].as_array().unwrap().len(), 2);
    }
}

#[test]
fn invalid_model_exits_with_validation_code() {
    let dir = TempDir::new().unwrap();
    let umdp = path(&dir, "bad.json");
    fs::write(&umdp, TWO_SAMPLE.replace(r#"["s1","safe","g","1","1"]"#, r#"["s1","safe","g","0.9","1"]"#)).unwrap();
    let res = run(&["plan", &umdp, "--out", &path(&dir, "p.json")]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("mass"));
}

#[test]
fn bad_planner_parameter_exits_with_validation_code() {
    let dir = TempDir::new().unwrap();
    let umdp = path(&dir, "two.json");
    fs::write(&umdp, TWO_SAMPLE).unwrap();
    let res = run(&["plan", &umdp, "--epsilon", "0", "--out", &path(&dir, "p.json")]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn expired_deadline_exits_with_timeout_code() {
    let dir = TempDir::new().unwrap();
    let umdp = path(&dir, "disaster.json");
    let gen = run(&["generate", "--domain", "disaster", "--seed", "3", "--samples", "6", "--candidates", "6", "--out", &umdp]);
    assert!(gen.status.success());
    let res = run(&["plan", &umdp, "--n", "3", "--timeout", "1e-9", "--out", &path(&dir, "p.json")]);
    assert_eq!(res.status.code(), Some(3), "{}", String::from_utf8_lossy(&res.stderr));
}

#[test]
fn injected_fault_fails_verification() {
    let res = run(&["verify", "--quick", "--inject-fault"]);
    assert_eq!(res.status.code(), Some(1));
    let text = stdout(&res);
    assert!(text.lines().any(|l| l.starts_with("FAIL") && l.contains("validator")), "{text}");
}

fn sweep_into(config: &Path, out: &Path) {
    let res = run(&["--threads", "2", "sweep", config.to_str().unwrap(), "--out", out.to_str().unwrap(), "--no-time"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
}

#[test]
fn repeated_sweeps_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("sweep.json");
    fs::write(
        &config,
        r#"{"domain":"medical","seeds":[1,2],"methods":[{"method":"reg","n":1},{"method":"robust"},{"method":"best"}],
            "n_samples":4,"candidates":8,"test_samples":3}"#,
    )
    .unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    sweep_into(&config, &a);
    sweep_into(&config, &b);
    let csv = fs::read(a.join("results.csv")).unwrap();
    assert_eq!(csv, fs::read(b.join("results.csv")).unwrap());
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("seed,domain,size,method,n,max_regret_train,max_regret_test,normalized,time_s"));
    assert_eq!(text.lines().count(), 1 + 2 * 3);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("summary.json")).unwrap()).unwrap();
    assert!(summary.is_object());
}
