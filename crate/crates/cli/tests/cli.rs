//! End-to-end checks of the binary: scenario exit codes, artifact schemas,
//! config/flag precedence and byte-level determinism.

use std::path::Path;
use std::process::{Command, Output};

fn fatlab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fatlab"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn scenario_quad_sym_matches() {
    let tmp = tempfile::tempdir().unwrap();
    let out = fatlab(tmp.path(), &["scenario", "quad_sym", "--out", "s"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(stdout(&out).contains("structure matches"));
    let scenario: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("s/scenario.json")).unwrap())
            .unwrap();
    assert_eq!(scenario["pass"], serde_json::Value::Bool(true));
    let pieces: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("s/pieces.json")).unwrap())
            .unwrap();
    assert_eq!(pieces[0]["seq"], "|10");
    assert_eq!(pieces[1]["seq"], "|01");
}

#[test]
fn scenario_quad_drift_matches() {
    let tmp = tempfile::tempdir().unwrap();
    let out = fatlab(tmp.path(), &["scenario", "quad_drift", "--out", "s"]);
    assert!(out.status.success());
    let pieces: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("s/pieces.json")).unwrap())
            .unwrap();
    let seqs: Vec<&str> = (0..3).map(|i| pieces[i]["seq"].as_str().unwrap()).collect();
    assert_eq!(seqs, ["|10", "|01", "0|01"]);
}

#[test]
fn scenario_mismatch_exits_3() {
    // Restricting the candidate family to period 1 breaks the expected
    // two-piece structure of the symmetric quadratic.
    let tmp = tempfile::tempdir().unwrap();
    let out = fatlab(
        tmp.path(),
        &[
            "scenario",
            "quad_sym",
            "--period-max",
            "1",
            "--preperiod-max",
            "0",
            "--out",
            "s",
        ],
    );
    assert_eq!(out.status.code(), Some(3), "{}", stdout(&out));
}

#[test]
fn unknown_scenario_and_bad_flags_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(
        fatlab(tmp.path(), &["scenario", "nope"]).status.code(),
        Some(1)
    );
    assert_eq!(
        fatlab(tmp.path(), &["solve", "--potential", "wat"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        fatlab(tmp.path(), &["solve", "--lambda", "1.5"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        fatlab(tmp.path(), &["solve", "--no-such-flag"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        fatlab(tmp.path(), &["solve", "--potential", "poly:1,2"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn zero_potential_gives_zero_subaction() {
    let tmp = tempfile::tempdir().unwrap();
    let out = fatlab(
        tmp.path(),
        &[
            "solve",
            "--potential",
            "poly:0,0,0",
            "--lambda",
            "0.5",
            "--grid",
            "256",
            "--out",
            "s",
        ],
    );
    assert!(out.status.success());
    let csv = std::fs::read_to_string(tmp.path().join("s/b.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let b: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(b, 0.0, "line {line}");
    }
}

#[test]
fn deterministic_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let args = [
        "attractor",
        "--seed",
        "7",
        "--iters",
        "1500",
        "--burn-in",
        "50",
        "--bins",
        "32",
    ];
    assert!(fatlab(tmp.path(), &[&args[..], &["--out", "a"]].concat())
        .status
        .success());
    assert!(fatlab(tmp.path(), &[&args[..], &["--out", "b"]].concat())
        .status
        .success());
    for name in ["cloud.csv", "boundary.csv"] {
        let a = std::fs::read(tmp.path().join("a").join(name)).unwrap();
        let b = std::fs::read(tmp.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }

    let args = ["envelope", "--grid", "512", "--out"];
    assert!(fatlab(tmp.path(), &[&args[..], &["e1"]].concat())
        .status
        .success());
    assert!(fatlab(tmp.path(), &[&args[..], &["e2"]].concat())
        .status
        .success());
    for name in ["envelope.csv", "pieces.json", "switches.json"] {
        let a = std::fs::read(tmp.path().join("e1").join(name)).unwrap();
        let b = std::fs::read(tmp.path().join("e2").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}

#[test]
fn config_file_with_flag_override() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(
        tmp.path().join("run.cfg"),
        "lambda = 0.3\ngrid = 256\n# comment\n",
    )
    .unwrap();
    let out = fatlab(
        tmp.path(),
        &[
            "solve", "--config", "run.cfg", "--out", "s", "--format", "json",
        ],
    );
    assert!(out.status.success());
    let json: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(json["lambda"], serde_json::json!(0.3));
    assert_eq!(json["n"], serde_json::json!(256));

    let out = fatlab(
        tmp.path(),
        &[
            "solve", "--config", "run.cfg", "--lambda", "0.7", "--out", "s", "--format", "json",
        ],
    );
    let json: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(
        json["lambda"],
        serde_json::json!(0.7),
        "flag must override config"
    );
}

#[test]
fn solve_report_schema() {
    let tmp = tempfile::tempdir().unwrap();
    let out = fatlab(tmp.path(), &["solve", "--grid", "1024", "--out", "s"]);
    assert!(out.status.success());
    let json: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(tmp.path().join("s/solve_report.json")).unwrap(),
    )
    .unwrap();
    for key in [
        "lambda",
        "n",
        "iterations",
        "residual",
        "max_b",
        "turning_points",
        "orbit",
    ] {
        assert!(json.get(key).is_some(), "missing key {key}");
    }
    assert_eq!(json["orbit"]["period"], serde_json::json!(2));
}

#[test]
fn fixed_depth_compat_mode() {
    // Depth-8 truncation reproduces the coarse figure pipeline. The bulk
    // structure survives (a thin truncation sliver near x = 0 is genuine:
    // the exact tie between |10 and 1|10 at 0 only holds for infinite sums).
    let tmp = tempfile::tempdir().unwrap();
    let out = fatlab(
        tmp.path(),
        &["envelope", "--depth", "8", "--grid", "512", "--out", "s"],
    );
    assert!(out.status.success());
    let pieces: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("s/pieces.json")).unwrap())
            .unwrap();
    let piece_at = |x: f64| -> String {
        pieces
            .as_array()
            .unwrap()
            .iter()
            .find(|p| p["l"].as_f64().unwrap() <= x && x <= p["r"].as_f64().unwrap())
            .unwrap()["seq"]
            .as_str()
            .unwrap()
            .to_string()
    };
    assert_eq!(piece_at(0.25), "|10");
    assert_eq!(piece_at(0.75), "|01");
}

#[test]
fn svg_artifacts_emitted() {
    let tmp = tempfile::tempdir().unwrap();
    let out = fatlab(
        tmp.path(),
        &[
            "attractor",
            "--svg",
            "--iters",
            "800",
            "--burn-in",
            "40",
            "--out",
            "s",
        ],
    );
    assert!(out.status.success());
    let svg = std::fs::read_to_string(tmp.path().join("s/attractor.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(svg.contains("circle"));
}
