//! End-to-end runs of the command-line tool on the shipped data files.

use std::path::{Path, PathBuf};
use std::process::Command;

use gridsleuth::commands::{self, IdentifyOptions};
use gridsleuth::config::{load_scenario, Overrides};
use gridsleuth::formats::feeder::{load_feeder, save_feeder};
use gridsleuth_core::feeder::fixtures::ieee13_like;
use gridsleuth_core::feeder::{assemble_ybus, Phase};
use gridsleuth_core::numerics::inverse;

fn data() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").canonicalize().unwrap()
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gridsleuth"))
}

/// Writes a config into `dir` whose input paths point at the shipped data.
fn config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let d = data();
    let text = body
        .replace("@FEEDER", &d.join("ieee13.feeder").display().to_string())
        .replace("@ALLOC", &d.join("ieee13.alloc").display().to_string());
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

const TRIP: &str = r#"
version = 1
feeder = "@FEEDER"
allocation = "@ALLOC"
unloaded_buses = ["rg60", "670", "692"]
slots = 70
seed = 4

[[events]]
kind = "line_trip"
slot = 50
line = "684-611"
"#;

#[test]
fn shipped_fixture_file_matches_builtin_fixture() {
    let text = std::fs::read_to_string(data().join("ieee13.feeder")).unwrap();
    let f = load_feeder(&text).unwrap();
    assert_eq!(f.node_count(), 38);
    assert_eq!(f, ieee13_like());
    assert_eq!(load_feeder(&save_feeder(&f)).unwrap(), f);
}

#[test]
fn two_bus_example_assembles_to_inverse_impedance() {
    let f = load_feeder(&std::fs::read_to_string(data().join("two_bus.feeder")).unwrap()).unwrap();
    let y = assemble_ybus(&f).unwrap();
    let zinv = inverse(&f.lines[0].z).unwrap();
    let src: Vec<usize> = Phase::ALL.iter().map(|&p| f.node_index("source", p).unwrap()).collect();
    let load: Vec<usize> = Phase::ALL.iter().map(|&p| f.node_index("load", p).unwrap()).collect();
    let off = y.y.submatrix(&src, &load);
    assert!((&off + &zinv).max_abs() < 1e-9 * zinv.max_abs());
    assert!(y.y.is_symmetric(1e-10));
}

#[test]
fn simulate_writes_stream_and_manifest_deterministically() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "c.toml", &TRIP.replace("slots = 70", "slots = 100"));
    for out in ["a", "b"] {
        let st = bin().args(["simulate", "--config"]).arg(&cfg).arg("--out").arg(tmp.path().join(out)).status().unwrap();
        assert!(st.success());
    }
    let read = |o: &str, f: &str| std::fs::read(tmp.path().join(o).join(f)).unwrap();
    assert_eq!(read("a", "stream.gsph"), read("b", "stream.gsph"));
    assert_eq!(read("a", "stream.csv"), read("b", "stream.csv"));
    let csv = String::from_utf8(read("a", "stream.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(rows.len(), 100 * 38);
    assert_eq!(rows.iter().filter(|r| r.split(',').nth(1) == Some("611.c")).count(), 100);
    let manifest: serde_json::Value = serde_json::from_slice(&read("a", "manifest.json")).unwrap();
    let hash = manifest["config_hash"].as_str().unwrap().to_string();
    assert!(csv.contains(&format!("# config_hash={hash}")));
    let ybus: serde_json::Value = serde_json::from_slice(&read("a", "ybus.json")).unwrap();
    assert_eq!(ybus["config_hash"], manifest["config_hash"]);

    let other = bin()
        .args(["simulate", "--seed-override", "99", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(tmp.path().join("c"))
        .status()
        .unwrap();
    assert!(other.success());
    assert_ne!(read("a", "stream.gsph"), read("c", "stream.gsph"));
}

#[test]
fn zero_slots_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "c.toml", &TRIP.replace("slots = 70", "slots = 0"));
    let out = bin().args(["validate", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("slots must be at least 1"));
    assert!(load_scenario(&cfg, &Overrides::default()).is_err());
}

#[test]
fn monitor_detects_and_localizes_the_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "c.toml", TRIP);
    let mut logs = Vec::new();
    for out in ["m1", "m2"] {
        let o = tmp.path().join(out);
        let st = bin().args(["monitor", "--config"]).arg(&cfg).arg("--out").arg(&o).status().unwrap();
        assert_eq!(st.code(), Some(2));
        logs.push(std::fs::read(o.join("alarms.csv")).unwrap());
    }
    assert_eq!(logs[0], logs[1]);
    let log = String::from_utf8(logs[0].clone()).unwrap();
    let alarmed: Vec<&str> = log.lines().filter(|l| l.ends_with(",1")).collect();
    assert_eq!(alarmed.len(), 1);
    assert!(alarmed[0].starts_with("50,"));
    let ev: serde_json::Value =
        serde_json::from_slice(&std::fs::read(tmp.path().join("m1/event_000050.json")).unwrap()).unwrap();
    assert_eq!(ev["classification"], "line_trip");
    assert_eq!(ev["lines"][0], "684-611");
    let top = &ev["changed_blocks"][0];
    let pair = [top["row_bus"].as_str().unwrap(), top["col_bus"].as_str().unwrap()];
    assert!(pair == ["684", "611"] || pair == ["611", "684"]);
}

#[test]
fn overlapping_window_exits_with_advice() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "c.toml", &format!("{TRIP}\n[localize]\nguard = -3\n"));
    let out = bin().args(["monitor", "--config"]).arg(&cfg).arg("--out").arg(tmp.path().join("m")).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("retry with a later start"));
}

#[test]
fn event_free_noisy_stream_reports_false_alarms_near_alpha() {
    // safety 1: the alarm rate on an independent event-free run should be close to α
    let tmp = tempfile::tempdir().unwrap();
    let body = r#"
version = 1
feeder = "@FEEDER"
allocation = "@ALLOC"
unloaded_buses = ["rg60", "670", "692"]
slots = 3000
seed = 21

[noise]
magnitude_std = 1e-3
angle_std = 1e-3
current_magnitude_std = 1e-3
current_angle_std = 1e-3

[detect]
alpha = 0.02
safety = 1.0
calibration_slots = 3000

[localize]
epsilon = 1e9
"#;
    let sc = load_scenario(&config(tmp.path(), "n.toml", body), &Overrides::default()).unwrap();
    let r = commands::cmd_monitor(&sc, None, &tmp.path().join("m")).unwrap();
    let s = &r.summary;
    assert!(s.events.is_empty(), "{:?}", s.events);
    assert_eq!(s.false_alarms, s.alarms.len());
    let rate = s.false_alarms as f64 / 3000.0;
    assert!(rate > 0.005 && rate < 0.04, "rate {rate}");
    assert_eq!(s.unconfirmed_alarms.len() + s.localization_failures.len(), s.alarms.len());
}

#[test]
fn identify_with_and_without_ground_truth() {
    let tmp = tempfile::tempdir().unwrap();
    let d = data();
    let text = std::fs::read_to_string(d.join("two_bus.toml")).unwrap()
        .replace("two_bus.feeder", &d.join("two_bus.feeder").display().to_string())
        .replace("two_bus.alloc", &d.join("two_bus.alloc").display().to_string());
    let cfg = tmp.path().join("t.toml");
    std::fs::write(&cfg, text).unwrap();
    let sc = load_scenario(&cfg, &Overrides::default()).unwrap();
    let sim = tmp.path().join("sim");
    commands::cmd_simulate(&sc, &sim).unwrap();
    let stream = commands::read_stream(&sim.join("stream.gsph")).unwrap();
    assert_eq!(commands::read_stream(&sim.join("stream.csv")).unwrap(), stream);

    let opts = IdentifyOptions { tau: 1e-6, first_slot: None, samples: None };
    let bare = tmp.path().join("bare");
    commands::cmd_identify(&stream, &opts, None, &bare).unwrap();
    assert!(bare.join("model.json").exists());
    assert!(!bare.join("error_report.json").exists());
    assert!(!bare.join("y22_error_grid.csv").exists());

    let truth = commands::read_ybus(&sim.join("ybus.json")).unwrap();
    let full = tmp.path().join("full");
    let r = commands::cmd_identify(&stream, &opts, Some(&truth), &full).unwrap();
    let e = r.errors.unwrap();
    assert!(full.join("y22_error_grid.csv").exists());
    let grid = std::fs::read_to_string(full.join("y22_error_grid.csv")).unwrap();
    let n = r.model.ind_rows.len();
    assert_eq!(grid.lines().filter(|l| !l.starts_with('#')).count(), n + 1);
    assert_eq!(e.y22_entries, n * n);
    assert!(e.max_relative_error_y22.is_finite());
}

#[test]
fn truncated_stream_reports_byte_offset() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "c.toml", &TRIP.replace("slots = 70", "slots = 5").replace("slot = 50", "slot = 3"));
    let sc = load_scenario(&cfg, &Overrides::default()).unwrap();
    commands::cmd_simulate(&sc, tmp.path()).unwrap();
    let bytes = std::fs::read(tmp.path().join("stream.gsph")).unwrap();
    let cut = tmp.path().join("cut.gsph");
    std::fs::write(&cut, &bytes[..bytes.len() - 100]).unwrap();
    let out = bin().arg("identify").arg(&cut).arg("--out").arg(tmp.path().join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains(&format!("byte offset {}", bytes.len() - 100)), "{msg}");
}

#[test]
fn replay_converts_to_identical_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "c.toml", &TRIP.replace("slots = 70", "slots = 8").replace("slot = 50", "slot = 3"));
    let sc = load_scenario(&cfg, &Overrides::default()).unwrap();
    commands::cmd_simulate(&sc, tmp.path()).unwrap();
    let out = bin()
        .arg("replay")
        .arg(tmp.path().join("stream.gsph"))
        .arg("--csv")
        .arg(tmp.path().join("re.csv"))
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("records 8"));
    assert_eq!(
        std::fs::read(tmp.path().join("re.csv")).unwrap(),
        std::fs::read(tmp.path().join("stream.csv")).unwrap()
    );
}
