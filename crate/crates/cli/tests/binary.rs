use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sim"))
        .args(args)
        .env("RUST_LOG", "warn")
        .env_remove("SIM_THREADS")
        .output()
        .expect("spawn sim")
}

fn quick() -> PathBuf {
    PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/quick.toml"))
}

fn write_config(dir: &Path, edit: impl Fn(String) -> String) -> PathBuf {
    let path = dir.join("c.toml");
    std::fs::write(&path, edit(std::fs::read_to_string(quick()).unwrap())).unwrap();
    path
}

#[test]
fn unknown_key_exits_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), |t| t.replace("[pulses]", "[pulses]\nchirp = 0.1"));
    let out = sim(&["run", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("chirp"));
}

#[test]
fn missing_config_exits_4() {
    let out = sim(&["run", "/nonexistent/config.toml"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn invalid_value_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), |t| t.replace("sigma_t = 1.57", "sigma_t = 0.0"));
    let out = sim(&["validate", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn single_scenario_run_writes_data_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().join("o");
    let out = sim(&[
        "run",
        quick().to_str().unwrap(),
        "--scenario",
        "josephson",
        "--scenario",
        "null_U0",
        "--seed",
        "11",
        "--out",
        o.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["josephson.csv", "null_U0_timeline.csv", "config.toml", "manifest.json"] {
        assert!(o.join(f).exists(), "{f}");
    }
    assert!(!o.join("g2_timeline.csv").exists());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(o.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 11);
    let names: Vec<&str> = manifest["scenarios"].as_array().unwrap().iter().map(|s| s["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["josephson", "null_U0"]);
    assert_eq!(manifest["scenarios"][1]["status"], "PASS");
    let csv = std::fs::read_to_string(o.join("josephson.csv")).unwrap();
    let header = csv.lines().find(|l| !l.starts_with('#')).unwrap();
    assert!(header.starts_with("t_ps,re_alpha_L,im_alpha_L,re_alpha_R,im_alpha_R,I_L,I_R,z"));
    assert!(csv.starts_with("# units: energies meV, times ps"));
}

#[test]
fn seed_changes_only_the_synthesized_events() {
    let dir = tempfile::tempdir().unwrap();
    let run = |seed: &str, name: &str| {
        let o = dir.path().join(name);
        let out = sim(&[
            "run",
            quick().to_str().unwrap(),
            "--scenario",
            "hbt_demo",
            "--scenario",
            "g2_timeline",
            "--seed",
            seed,
            "--out",
            o.to_str().unwrap(),
        ]);
        assert!(out.status.success());
        o
    };
    let (a, b, c) = (run("1", "a"), run("1", "b"), run("2", "c"));
    let read = |d: &Path, f: &str| std::fs::read(d.join(f)).unwrap();
    assert_eq!(read(&a, "hbt_events.csv"), read(&b, "hbt_events.csv"));
    assert_ne!(read(&a, "hbt_events.csv"), read(&c, "hbt_events.csv"));
    assert_eq!(read(&a, "g2_timeline.csv"), read(&c, "g2_timeline.csv"));
}
