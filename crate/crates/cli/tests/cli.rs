//! End-to-end tests of the `tgm` binary: exit codes over the bundled
//! corpus, schema rejection, flag overrides, and report determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_tgm")
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("binary runs")
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

#[test]
fn check_exit_codes_over_corpus() {
    for (name, want) in [
        ("s1_flat.scn", 0),
        ("s2_twisted.scn", 0),
        ("s3_heisenberg.scn", 0),
        ("s4_negative.scn", 1),
        ("s5_rotation.scn", 0),
        ("s6_non_involutive.scn", 1),
    ] {
        let out = run(&["check", scenario(name).to_str().unwrap()]);
        assert_eq!(exit_code(&out), want, "{name}: {out:?}");
    }
}

#[test]
fn check_reports_verdict_lines() {
    let out = run(&["check", scenario("s2_twisted.scn").to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("transverse"));
    assert!(stdout.contains("can be gauged along D"));
    let out = run(&["check", scenario("s4_negative.scn").to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("not_transverse"));
}

#[test]
fn quotient_exit_codes() {
    assert_eq!(
        exit_code(&run(&["quotient", scenario("s3_heisenberg.scn").to_str().unwrap()])),
        0
    );
    assert_eq!(
        exit_code(&run(&["quotient", scenario("s1_flat.scn").to_str().unwrap()])),
        0
    );
    let out = run(&["quotient", scenario("s4_negative.scn").to_str().unwrap()]);
    assert_eq!(exit_code(&out), 1);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("basic-ness violation"), "{stdout}");
    // no [quotient] section
    let out = run(&["quotient", scenario("s5_rotation.scn").to_str().unwrap()]);
    assert_eq!(exit_code(&out), 3);
}

#[test]
fn loops_exit_codes() {
    let dir = std::env::temp_dir();
    let json_path = dir.join("tgm_loops_s2.json");
    let out = run(&[
        "loops",
        scenario("s2_twisted.scn").to_str().unwrap(),
        "--json",
        json_path.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "{out:?}");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&json_path).unwrap()).unwrap();
    assert_eq!(report["schema"], 1);
    assert_eq!(report["canonical"]["checks"]["loops"]["status"], "pass");
    let out = run(&[
        "loops",
        scenario("s4_negative.scn").to_str().unwrap(),
        "--N",
        "64,128",
    ]);
    assert_eq!(exit_code(&out), 1);
    let out = run(&["loops", scenario("s5_rotation.scn").to_str().unwrap()]);
    assert_eq!(exit_code(&out), 3, "no [loop] section means input error");
}

#[test]
fn corrupted_and_malformed_files_exit_3() {
    let dir = std::env::temp_dir();
    let path = dir.join("tgm_corrupt.scn");
    std::fs::write(&path, "{{{not toml").unwrap();
    assert_eq!(exit_code(&run(&["check", path.to_str().unwrap()])), 3);

    // lower-triangle metric key
    let path = dir.join("tgm_lower_triangle.scn");
    std::fs::write(
        &path,
        r#"
name = "bad"
[chart]
coords = ["x", "y"]
box = [[-1.0, 1.0], [-1.0, 1.0]]
[metric]
xx = "1"
yx = "0"
yy = "1"
[[dirac_frame]]
vector = ["1", "0"]
one_form = ["0", "0"]
"#,
    )
    .unwrap();
    let out = run(&["check", path.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 3);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("upper triangle"), "{stderr}");

    // missing dirac_frame
    let path = dir.join("tgm_missing_frame.scn");
    std::fs::write(
        &path,
        r#"
name = "bad"
[chart]
coords = ["x", "y"]
box = [[-1.0, 1.0], [-1.0, 1.0]]
[metric]
xx = "1"
yy = "1"
"#,
    )
    .unwrap();
    assert_eq!(exit_code(&run(&["check", path.to_str().unwrap()])), 3);

    // multi-chart layouts rejected with a clear message
    let path = dir.join("tgm_multichart.scn");
    std::fs::write(
        &path,
        r#"
name = "bad"
[[charts]]
coords = ["x"]
"#,
    )
    .unwrap();
    let out = run(&["check", path.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("multi-chart"));

    // expression error carries a byte offset
    let path = dir.join("tgm_badexpr.scn");
    std::fs::write(
        &path,
        r#"
name = "bad"
[chart]
coords = ["x", "y"]
box = [[-1.0, 1.0], [-1.0, 1.0]]
[metric]
xx = "1 + * x"
yy = "1"
[[dirac_frame]]
vector = ["1", "0"]
one_form = ["0", "0"]
"#,
    )
    .unwrap();
    let out = run(&["check", path.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("byte"));
}

#[test]
fn sampling_flags_override_scenario() {
    let dir = std::env::temp_dir();
    let a = dir.join("tgm_override_a.json");
    let b = dir.join("tgm_override_b.json");
    let path = scenario("s1_flat.scn");
    let out = run(&[
        "check",
        path.to_str().unwrap(),
        "--samples",
        "37",
        "--seed",
        "9",
        "--json",
        a.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&a).unwrap()).unwrap();
    assert_eq!(report["canonical"]["samples"], 37);
    assert_eq!(report["canonical"]["seed"], 9);
    // tightened fail threshold flips the negative scenario to inconclusive
    let out = run(&[
        "check",
        scenario("s4_negative.scn").to_str().unwrap(),
        "--tol-fail",
        "1e3",
        "--json",
        b.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 2, "{out:?}");
}

#[test]
fn thread_count_env_var_does_not_change_results() {
    let dir = std::env::temp_dir();
    let mut hashes = Vec::new();
    for threads in ["1", "4"] {
        let path = dir.join(format!("tgm_threads_{threads}.json"));
        let out = Command::new(bin())
            .arg("check")
            .arg(scenario("s3_heisenberg.scn"))
            .arg("--json")
            .arg(&path)
            .env("TGM_THREADS", threads)
            .output()
            .expect("binary runs");
        assert_eq!(exit_code(&out), 0);
        let report: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        hashes.push(report["report_hash"].as_str().unwrap().to_string());
    }
    assert_eq!(hashes[0], hashes[1], "thread count changed the report");
}

#[test]
fn json_reports_are_deterministic() {
    let dir = std::env::temp_dir();
    let mut hashes = Vec::new();
    for run_idx in 0..2 {
        let path = dir.join(format!("tgm_det_{run_idx}.json"));
        let out = run(&[
            "check",
            scenario("s2_twisted.scn").to_str().unwrap(),
            "--json",
            path.to_str().unwrap(),
        ]);
        assert_eq!(exit_code(&out), 0);
        let report: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        hashes.push(report["report_hash"].as_str().unwrap().to_string());
        // canonical section must be byte-identical, so compare it too
        let canonical = serde_json::to_vec(&report["canonical"]).unwrap();
        hashes.push(String::from_utf8_lossy(&canonical).into_owned());
    }
    assert_eq!(hashes[0], hashes[2], "hash differs between runs");
    assert_eq!(hashes[1], hashes[3], "canonical bytes differ between runs");
}
