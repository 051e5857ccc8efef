//! Scenario runner behaviour: reproducible outputs, an exhaustive
//! manifest, configuration errors that write nothing and reports left
//! behind by failing stages.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use msnc_core::pipeline::{run_scenario, OutputFormat, PipelineError, ScenarioConfig, REPORT_FILE};

fn config(scenario: &str, dir: &Path) -> ScenarioConfig {
    ScenarioConfig {
        scenario: scenario.into(),
        output_dir: dir.display().to_string(),
        ..ScenarioConfig::default()
    }
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    for (name, format) in [("fig4", OutputFormat::Csv), ("fig7", OutputFormat::Json)] {
        let dir = tmp.path().join(name);
        let cfg = ScenarioConfig {
            format,
            ..config(name, &dir)
        };
        run_scenario(&cfg).unwrap();
        let first = snapshot(&dir);
        run_scenario(&cfg).unwrap();
        assert_eq!(first, snapshot(&dir), "{name}");
    }
}

#[test]
fn manifest_lists_exactly_the_files_written() {
    let tmp = tempfile::tempdir().unwrap();
    let report = run_scenario(&config("fig4", tmp.path())).unwrap();
    let on_disk: BTreeSet<String> = snapshot(tmp.path()).into_iter().map(|(n, _)| n).collect();
    let listed: BTreeSet<String> = report.manifest.iter().cloned().collect();
    assert_eq!(on_disk, listed);
    assert!(listed.contains(REPORT_FILE));
    assert!(listed.contains("fig4_impedances.csv"));
    assert!(report.failed_stage.is_none());
    assert!(report.stages.iter().all(|s| s.ok));
    // The written report matches the returned one.
    let json: serde_json::Value =
        serde_json::from_slice(&fs::read(tmp.path().join(REPORT_FILE)).unwrap()).unwrap();
    assert_eq!(json["scenario"], "fig4");
    assert_eq!(
        json["checks"].as_array().unwrap().len(),
        report.checks.len()
    );
}

#[test]
fn csv_tables_have_a_header_and_uniform_rows() {
    let tmp = tempfile::tempdir().unwrap();
    run_scenario(&config("fig4", tmp.path())).unwrap();
    let mut rdr = csv::Reader::from_path(tmp.path().join("fig4_sparams.csv")).unwrap();
    let header = rdr.headers().unwrap().clone();
    assert_eq!(&header[0], "k");
    let rows: Vec<_> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 50);
    for r in &rows {
        assert_eq!(r.len(), header.len());
        for v in r.iter() {
            let x: f64 = v.parse().unwrap();
            assert!(x.is_finite());
        }
    }
}

#[test]
fn invalid_configuration_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("out");
    let mut cfg = config("fig4", &dir);
    cfg.power_dbm.step = -1.0;
    cfg.frequency.points = 0;
    match run_scenario(&cfg) {
        Err(PipelineError::Config(errs)) => {
            assert!(errs.len() >= 2, "{errs:?}");
            assert!(errs.iter().any(|e| e.starts_with("power_dbm")));
            assert!(errs.iter().any(|e| e.starts_with("frequency")));
        }
        other => panic!("expected a configuration error, got {other:?}"),
    }
    assert!(!dir.exists());
}

#[test]
fn unknown_scenario_is_rejected_by_name() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("out");
    let err = run_scenario(&config("fig99", &dir)).unwrap_err();
    let msg = err.to_string();
    assert!(
        msg.contains("fig99") && msg.contains("fig13-efficiency"),
        "{msg}"
    );
    assert!(!dir.exists());
}

#[test]
fn failing_stage_leaves_a_partial_report() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = config("fig13-efficiency", tmp.path());
    // Narrower than the microstrip model accepts: geometry is valid, but
    // the netlist cannot be built.
    cfg.topology.mn1.w_mm = 1e-4;
    let err = run_scenario(&cfg).unwrap_err();
    let PipelineError::Stage { stage, report, .. } = err else {
        panic!("expected a stage failure, got {err:?}");
    };
    assert_eq!(stage, "netlist");
    assert_eq!(report.failed_stage.as_deref(), Some("netlist"));
    let on_disk: BTreeSet<String> = snapshot(tmp.path()).into_iter().map(|(n, _)| n).collect();
    let listed: BTreeSet<String> = report.manifest.iter().cloned().collect();
    assert_eq!(on_disk, listed);
    let json: serde_json::Value =
        serde_json::from_slice(&fs::read(tmp.path().join(REPORT_FILE)).unwrap()).unwrap();
    assert_eq!(json["failed_stage"], "netlist");
    assert_eq!(json["stages"][0]["ok"], false);
}

#[test]
fn configuration_files_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config("fig7", tmp.path());
    let text = cfg.to_toml_string();
    assert_eq!(ScenarioConfig::from_toml_str(&text).unwrap(), cfg);
    let json = serde_json::to_string(&cfg).unwrap();
    assert_eq!(ScenarioConfig::from_json_str(&json).unwrap(), cfg);
}

#[test]
fn shipped_default_configuration_is_valid() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml");
    let text = fs::read_to_string(&path).unwrap();
    let cfg = ScenarioConfig::from_toml_str(&text).unwrap();
    assert!(cfg.validate().is_empty(), "{:?}", cfg.validate());
}
