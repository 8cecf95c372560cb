use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
[system]
num_antennas = 8
subcarriers = 32
n_theta = 90
n_tau = 25
t_max = 2
[learning]
batch_size = 4
iterations = 6
[eval]
items = 30
calibration_items = 4
calibration_points = 6
generalization_means_deg = [10.0, 70.0]
roc_thresholds = [1.0, 10.0]
eta_points = 2
"#;

fn isac(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_isac"))
        .current_dir(dir)
        .args(["--preset", "desk", "--config", "tiny.toml"])
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: Output) -> Output {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("tiny.toml"), TINY).unwrap();
    dir
}

fn read(p: impl AsRef<Path>) -> String {
    fs::read_to_string(p).unwrap()
}

#[test]
fn every_subcommand_writes_its_files_and_manifest() {
    let w = workspace();
    let d = w.path();
    ok(isac(d, &["train", "--out", "o"]));
    ok(isac(d, &["train", "--mode", "dictionary", "--out", "o"]));
    ok(isac(d, &["calibrate", "--out", "o"]));
    let systems = [
        "--checkpoint",
        "imp=o/checkpoint_impairment.json",
        "--checkpoint",
        "dict=o/checkpoint_dictionary.json",
        "--calibrated",
        "o/calibrated.json",
    ];
    for cmd in ["simulate", "roc", "isac-sweep", "generalize", "map-dump"] {
        let mut args = vec![cmd, "--out", "o"];
        args.extend(systems);
        ok(isac(d, &args));
    }
    let o = d.join("o");
    for cmd in ["train", "calibrate", "simulate", "roc", "isac-sweep", "generalize", "map-dump"] {
        let m: serde_json::Value = serde_json::from_str(&read(o.join(format!("manifest_{cmd}.json")))).unwrap();
        assert_eq!(m["command"], cmd);
        for f in m["files"].as_array().unwrap() {
            assert!(o.join(f.as_str().unwrap()).exists(), "{cmd} lists missing {f}");
        }
    }
    let sensing = read(o.join("sensing.csv"));
    let names: Vec<&str> = sensing.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    for n in ["known", "agnostic", "imp", "dict", "calibrated"] {
        assert!(names.contains(&n), "{n} missing from sensing.csv");
    }
    // the free dictionary cannot be moved to the sector grid
    assert!(!read(o.join("generalization.csv")).contains("\ndict,"));
    assert!(o.join("map_dict.csv").exists());
    assert_eq!(read(o.join("loss_impairment.csv")).lines().count(), 7);
}

#[test]
fn reruns_are_byte_identical_and_seed_changes_only_data() {
    let w = workspace();
    let d = w.path();
    ok(isac(d, &["roc", "--out", "a"]));
    ok(isac(d, &["roc", "--out", "b"]));
    ok(isac(d, &["roc", "--out", "c", "--seed", "5"]));
    let (a, b, c) = (read(d.join("a/roc.csv")), read(d.join("b/roc.csv")), read(d.join("c/roc.csv")));
    assert_eq!(a, b);
    assert_eq!(read(d.join("a/manifest_roc.json")), read(d.join("b/manifest_roc.json")));
    assert_ne!(a, c);
    assert_eq!(a.lines().next(), c.lines().next());
    assert_eq!(a.lines().count(), c.lines().count());
}

#[test]
fn resumed_training_matches_a_single_run() {
    let w = workspace();
    let d = w.path();
    ok(isac(d, &["train", "--out", "full"]));
    fs::write(d.join("short.toml"), TINY.replace("iterations = 6", "iterations = 3")).unwrap();
    let short = Command::new(env!("CARGO_BIN_EXE_isac"))
        .current_dir(d)
        .args(["--preset", "desk", "--config", "short.toml", "train", "--out", "part"])
        .output()
        .unwrap();
    ok(short);
    ok(isac(d, &["train", "--out", "part2", "--resume", "part/checkpoint_impairment.json"]));
    let full: serde_json::Value = serde_json::from_str(&read(d.join("full/checkpoint_impairment.json"))).unwrap();
    let resumed: serde_json::Value = serde_json::from_str(&read(d.join("part2/checkpoint_impairment.json"))).unwrap();
    assert_eq!(full, resumed);
    assert_eq!(read(d.join("part2/loss_impairment.csv")).lines().count(), 4);
}

#[test]
fn bad_inputs_fail_cleanly() {
    let w = workspace();
    let d = w.path();
    let out = isac(d, &["simulate", "--out", "o", "--checkpoint", "missing-separator"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("NAME=PATH"));

    fs::write(d.join("tiny.toml"), format!("{TINY}\nbogus = 1\n")).unwrap();
    assert!(!isac(d, &["roc", "--out", "o"]).status.success());

    fs::write(d.join("tiny.toml"), TINY).unwrap();
    ok(isac(d, &["train", "--mode", "dictionary", "--out", "o"]));
    let out = isac(d, &["train", "--out", "o", "--resume", "o/checkpoint_dictionary.json"]);
    assert!(!out.status.success());

    fs::write(d.join("blocker"), "").unwrap();
    assert!(!isac(d, &["roc", "--out", "blocker/sub"]).status.success());
}
