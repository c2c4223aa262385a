mod common;

use std::fs;

use randschro::harness::{emit, read_json, row_record, run_experiment, Report, ReportRow, CSV_HEADER, SCHEMA_VERSION};
use randschro::medium::{MediumSpec, RegimeLabel};
use randschro::par::Execution;

use common::small_config;

const HEADER_LINE: &str = "experiment_id,eps,alpha,regime,t,xi,M,N,re_mean,im_mean,stderr,n_samples,re_pred,im_pred,phase_var,phase_var_pred,ks_stat,ks_pass";

fn regime() -> randschro::medium::Regime {
    MediumSpec::medium_a().classify_regime(2.0 / 3.0).unwrap()
}

fn one_row() -> ReportRow {
    ReportRow {
        experiment_id: "one".into(),
        eps: 0.07,
        alpha: 2.0 / 3.0,
        regime: RegimeLabel::FractionalPhase,
        t: 1.0,
        xi: vec![1.0],
        m: 1,
        n: 1,
        re_mean: 2.25,
        im_mean: 0.0,
        stderr: 0.01,
        n_samples: 2000,
        re_pred: Some(2.3),
        im_pred: Some(0.0),
        phase_var: Some(1.5),
        phase_var_pred: None,
        ks_stat: Some(0.012),
        ks_pass: Some(true),
    }
}

#[test]
fn header_matches_the_contract() {
    assert_eq!(CSV_HEADER.join(","), HEADER_LINE);
}

#[test]
fn empty_report_gives_header_only_csv() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, json) = emit(&Report::empty("none", regime()), dir.path(), "r.csv", "r.json").unwrap();
    assert_eq!(fs::read_to_string(csv).unwrap(), format!("{HEADER_LINE}\n"));
    assert!(read_json(&json).unwrap().rows.is_empty());
}

#[test]
fn single_row_report_gives_one_data_line() {
    let dir = tempfile::tempdir().unwrap();
    let mut report = Report::empty("one", regime());
    report.rows.push(one_row());
    let (csv, _) = emit(&report, dir.path(), "r.csv", "r.json").unwrap();
    let text = fs::read_to_string(csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], HEADER_LINE);
    assert_eq!(lines[1], "one,0.07,0.6666666666666666,fractional-phase,1,1,1,1,2.25,0,0.01,2000,2.3,0,1.5,,0.012,true");
    assert_eq!(lines[1].split(',').count(), CSV_HEADER.len());
    assert_eq!(row_record(&one_row()).len(), CSV_HEADER.len());
}

#[test]
fn json_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_experiment(&small_config(vec![0.2], 5), Execution::Parallel).unwrap();
    let (_, json) = emit(&report, dir.path(), "r.csv", "r.json").unwrap();
    let back = read_json(&json).unwrap();
    assert_eq!(back, report);
    for (a, b) in back.rows.iter().zip(&report.rows) {
        assert_eq!(a.re_mean.to_bits(), b.re_mean.to_bits());
        assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
    }
}

#[test]
fn emit_overwrites_in_place() {
    let dir = tempfile::tempdir().unwrap();
    let mut report = Report::empty("one", regime());
    report.rows = vec![one_row(); 3];
    emit(&report, dir.path(), "r.csv", "r.json").unwrap();
    report.rows.truncate(1);
    let (csv, _) = emit(&report, dir.path(), "r.csv", "r.json").unwrap();
    assert_eq!(fs::read_to_string(csv).unwrap().lines().count(), 2);
}

#[test]
fn wrong_schema_version_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let mut report = Report::empty("v", regime());
    report.schema_version = SCHEMA_VERSION + 1;
    let path = dir.path().join("r.json");
    fs::write(&path, serde_json::to_string(&report).unwrap()).unwrap();
    assert!(read_json(&path).is_err());
}

#[test]
fn unwritable_directory_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("plain");
    fs::write(&file, "x").unwrap();
    let err = emit(&Report::empty("x", regime()), &file.join("sub"), "r.csv", "r.json").unwrap_err();
    assert!(err.to_string().contains("plain"), "{err}");
}

#[test]
fn identical_configs_give_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(vec![0.2], 4);
    let a = run_experiment(&cfg, Execution::Parallel).unwrap();
    let b = run_experiment(&cfg, Execution::Sequential).unwrap();
    let (ca, _) = emit(&a, &dir.path().join("a"), "r.csv", "r.json").unwrap();
    let (cb, _) = emit(&b, &dir.path().join("b"), "r.csv", "r.json").unwrap();
    assert_eq!(fs::read(ca).unwrap(), fs::read(cb).unwrap());
}
