use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

const STAGES: [&str; 9] = ["ingest", "abstract", "build", "export-prism", "check", "gap", "eval", "guide", "report"];

/// The bundled fixture config with a short k grid, one k method and two
/// training seeds, written next to an absolute data path.
fn small_config(dir: &Path) -> PathBuf {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures");
    let mut config: Value = serde_json::from_str(&fs::read_to_string(fixtures.join("acc.json")).unwrap()).unwrap();
    config["data"] = json!(fixtures.join("acc.csv"));
    config["clustering"]["k_range"] = json!([300, 600]);
    config["eval"]["k_methods"] = json!(["elbow"]);
    config["guide"]["training"] = json!({"episodes": 60, "seeds": [0, 1]});
    let path = dir.join("acc.json");
    fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

fn mdpabs(stage: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mdpabs"))
        .arg(stage)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

fn run_all(config: &Path, out: &Path) {
    for stage in STAGES {
        let o = mdpabs(stage, config, out, &[]);
        assert!(o.status.success(), "{stage}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

fn artifacts(out: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(out)
        .unwrap()
        .map(|e| e.unwrap())
        .map(|e| (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap()))
        .filter(|(name, _)| name != "timings.json")
        .collect();
    files.sort();
    files
}

#[test]
fn full_run_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_all(&config, &a);
    let names: Vec<String> = artifacts(&a).into_iter().map(|(n, _)| n).collect();
    for expected in [
        "ingest.json",
        "abstract.json",
        "mdp.json",
        "acc.prism",
        "acc.props",
        "check.json",
        "acc.gap.json",
        "acc.eval.json",
        "guide.json",
        "curves.csv",
        "report.md",
    ] {
        assert!(names.iter().any(|n| n == expected), "missing {expected} in {names:?}");
    }
    run_all(&config, &b);
    assert_eq!(artifacts(&a), artifacts(&b));
    // rerunning into the same directory rewrites identical bytes
    let before = artifacts(&a);
    run_all(&config, &a);
    assert_eq!(before, artifacts(&a));
}

#[test]
fn missing_and_stale_prerequisites_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let out = dir.path().join("out");

    let o = mdpabs("check", &config, &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("`build`"), "{err}");

    assert!(mdpabs("ingest", &config, &out, &[]).status.success());
    let o = mdpabs("abstract", &config, &out, &["--seed", "9"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("stale"));
}

#[test]
fn config_violations_exit_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let mut bad: Value = serde_json::from_str(&fs::read_to_string(&config).unwrap()).unwrap();
    bad["abstraction"]["gamma"] = json!(1.5);
    fs::write(&config, bad.to_string()).unwrap();
    let o = mdpabs("ingest", &config, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("gamma"));

    let o = mdpabs("ingest", &dir.path().join("absent.json"), &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn horizon_override_changes_the_properties() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let out = dir.path().join("out");
    for stage in ["ingest", "abstract", "build", "export-prism"] {
        assert!(mdpabs(stage, &config, &out, &["--horizon", "7"]).status.success());
    }
    let props = fs::read_to_string(out.join("acc.props")).unwrap();
    assert!(props.contains("C<=7") && props.contains("F<=7") && !props.contains("<=51"), "{props}");
}
