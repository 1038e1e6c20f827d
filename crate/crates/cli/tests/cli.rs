//! Drives the compiled binary end to end.

use std::fs;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_noisescape"))
}

fn write_inputs(dir: &Path) {
    fs::write(
        dir.join("scenario.json"),
        r#"{
  "seed": 3,
  "start": "2020-01-01T00:00:00",
  "end": "2020-01-20T00:00:00",
  "stations": [
    { "station_id": "1", "base_level_db": 58.0, "noise_sd_db": 0.4,
      "step": { "at": "2020-01-10T00:00:00", "magnitude_db": -6.0 } },
    { "station_id": "2", "base_level_db": 61.0, "noise_sd_db": 0.4 }
  ]
}"#,
    )
    .unwrap();
    fs::write(
        dir.join("stations.csv"),
        "station_id,name,lat,lon\n1,West Gate,53.343,-6.362\n2,North Library,53.390,-6.265\n",
    )
    .unwrap();
    fs::write(
        dir.join("traffic.csv"),
        "lat,lon,night_count,day_count,evening_count\n53.3431,-6.3621,658.5,2018.1,6877.6\n",
    )
    .unwrap();
    fs::write(
        dir.join("schools.csv"),
        "name,lat,lon\nSchool A,53.3435,-6.3615\n",
    )
    .unwrap();
    fs::write(
        dir.join("config.txt"),
        "analysis_start = 2020-01-01T00:00\nsplit_instant = 2020-01-10T00:00\nanalysis_end = 2020-01-20T00:00\n",
    )
    .unwrap();
}

#[test]
fn synth_then_report_succeeds() {
    let tmp = tempfile::tempdir().unwrap();
    write_inputs(tmp.path());

    let status = bin()
        .args(["synth", "--spec"])
        .arg(tmp.path().join("scenario.json"))
        .arg("--out")
        .arg(tmp.path().join("data"))
        .status()
        .unwrap();
    assert!(status.success());
    assert!(tmp.path().join("data/samples.csv").exists());
    assert!(tmp.path().join("data/truth.json").exists());

    let status = bin()
        .arg("report")
        .arg("--samples")
        .arg(tmp.path().join("data/samples.csv"))
        .arg("--stations")
        .arg(tmp.path().join("stations.csv"))
        .arg("--traffic")
        .arg(tmp.path().join("traffic.csv"))
        .arg("--schools")
        .arg(tmp.path().join("schools.csv"))
        .arg("--config")
        .arg(tmp.path().join("config.txt"))
        .arg("--out")
        .arg(tmp.path().join("bundle"))
        .status()
        .unwrap();
    assert!(status.success());
    let manifest = fs::read_to_string(tmp.path().join("bundle/manifest.json")).unwrap();
    assert!(manifest.contains("\"failed_step\": null"));
    let table1 = fs::read_to_string(tmp.path().join("bundle/table1_stations.csv")).unwrap();
    assert!(table1.contains("2020-01-10T00:00"));
}

#[test]
fn missing_input_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    write_inputs(tmp.path());
    let status = bin()
        .arg("report")
        .arg("--samples")
        .arg(tmp.path().join("nope.csv"))
        .arg("--stations")
        .arg(tmp.path().join("stations.csv"))
        .arg("--traffic")
        .arg(tmp.path().join("traffic.csv"))
        .arg("--schools")
        .arg(tmp.path().join("schools.csv"))
        .arg("--out")
        .arg(tmp.path().join("bundle"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn ingest_check_reports_flags() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(
        tmp.path().join("bad.csv"),
        "station_id,timestamp,leq_db,lmax_db\nS1,2020-01-01T00:00,58.2,50.0\nS1,2020-01-01T00:05,58.2,63.0\n",
    )
    .unwrap();
    let output = bin()
        .arg("ingest-check")
        .arg("--samples")
        .arg(tmp.path().join("bad.csv"))
        .output()
        .unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("accepted 1"));
    assert!(stdout.contains("lmax<leq"));
}
