use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn polsr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polsr")).args(args).env_remove("POLSR_OUT_DIR").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_preset(dir: &Path, name: &str, edit: impl FnOnce(&mut serde_json::Value)) -> String {
    let o = polsr(&["presets", "show", name]);
    let mut v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    edit(&mut v);
    let path = dir.join(format!("{name}.json"));
    fs::write(&path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn presets_match_snapshots() {
    for name in ["shuttle2", "threenode", "grid19"] {
        for protocol in ["olsr", "polsr"] {
            let o = polsr(&["presets", "show", name, "--protocol", protocol]);
            assert!(o.status.success());
            let snap = Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("tests/snapshots/{name}-{protocol}.json"));
            assert_eq!(stdout(&o), fs::read_to_string(snap).unwrap(), "{name}/{protocol} drifted");
        }
    }
    let list = stdout(&polsr(&["presets", "list"]));
    assert_eq!(list.lines().count(), 3);
}

#[test]
fn validate_accepts_presets_and_reports_fields() {
    let dir = tempfile::tempdir().unwrap();
    let ok = write_preset(dir.path(), "threenode", |_| {});
    let o = polsr(&["validate", &ok]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("OK threenode"));
    assert!(stdout(&o).contains("\"tc_validity_factor\""));

    let bad = write_preset(dir.path(), "shuttle2", |v| {
        v["params"]["hello_interval"] = (-1.0).into();
        v["params"]["beta"] = (-0.5).into();
    });
    let o = polsr(&["validate", &bad]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("params.hello_interval") || err.contains("params.beta"), "{err}");

    assert_eq!(polsr(&["validate", "/nonexistent/scenario.json"]).status.code(), Some(4));
}

#[test]
fn run_writes_identical_files_for_equal_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let file = write_preset(dir.path(), "threenode", |v| v["duration"] = 60.0.into());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for (out, protocol) in [(&a, "olsr"), (&b, "olsr"), (&a, "polsr")] {
        let o = polsr(&["run", &file, "--seed", "4", "--out", out.to_str().unwrap(), "--protocol", protocol]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let text = stdout(&o);
        assert!(text.contains("seeds 4") && text.contains("hash ") && text.contains("outage_time_s"));
    }
    let names = |d: &Path| {
        let mut v: Vec<_> = fs::read_dir(d).unwrap().map(|e| e.unwrap().file_name()).collect();
        v.sort();
        v
    };
    assert_eq!(names(&a).len(), 8);
    for name in names(&b) {
        assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap(), "{name:?}");
    }
    let manifest = names(&b).into_iter().find(|n| n.to_str().unwrap().ends_with(".manifest.json")).unwrap();
    let m: serde_json::Value = serde_json::from_slice(&fs::read(b.join(manifest)).unwrap()).unwrap();
    assert_eq!(m["seeds"], serde_json::json!([4]));
    assert!(m["version"].is_string() && m["scenario_hash"].is_string());
}

#[test]
fn run_uses_out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let file = write_preset(dir.path(), "shuttle2", |v| v["duration"] = 20.0.into());
    let o = Command::new(env!("CARGO_BIN_EXE_polsr"))
        .args(["run", &file, "--reps", "2"])
        .env("POLSR_OUT_DIR", dir.path().join("env"))
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let files: Vec<_> = fs::read_dir(dir.path().join("env")).unwrap().collect();
    assert_eq!(files.len(), 2 * 4 + 2);
}

#[test]
fn unknown_preset_is_a_validation_error() {
    assert_eq!(polsr(&["run", "nosuchpreset"]).status.code(), Some(2));
}

#[test]
fn sweep_emits_one_row_per_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let file = write_preset(dir.path(), "threenode", |v| v["duration"] = 30.0.into());
    let out = dir.path().join("sweep");
    let o = polsr(&[
        "sweep", &file, "--hi", "0.5,1", "--alpha", "0.2", "--beta", "0.1,0.2", "--gamma", "0.04", "--reps", "2",
        "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_dir(&out).unwrap().map(|e| e.unwrap().path()).find(|p| p.extension().unwrap() == "csv").unwrap();
    let text = fs::read_to_string(csv).unwrap();
    // 2 OLSR rows plus 2 x 2 P-OLSR rows
    assert_eq!(text.lines().count(), 1 + 2 + 4);
    assert!(text.lines().all(|l| l.split(',').count() == 9));
    assert!(text.contains(",2,"));
}

#[test]
fn sweep_keeps_completed_rows_when_a_configuration_fails() {
    let dir = tempfile::tempdir().unwrap();
    let file = write_preset(dir.path(), "threenode", |v| v["duration"] = 20.0.into());
    let out = dir.path().join("sweep");
    let o = polsr(&[
        "sweep", &file, "--hi", "0.5", "--alpha", "0.2", "--beta", "0.2,-1", "--reps", "1", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
    let csv = fs::read_dir(&out).unwrap().map(|e| e.unwrap().path()).find(|p| p.extension().unwrap() == "csv").unwrap();
    assert_eq!(fs::read_to_string(csv).unwrap().lines().count(), 1 + 2);
}
