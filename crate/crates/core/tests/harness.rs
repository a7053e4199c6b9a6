use std::fs;
use std::path::Path;

use rhs_radar::bench::table::{fmt_num, read_trials, summarize, write_table, SUMMARY_HEADER, TRIAL_HEADER};
use rhs_radar::bench::{plan, preset, run_experiment, run_trial, ExperimentSpec};
use rhs_radar::signal::to_db;
use rhs_radar::Error;

fn small_spec(dir: &Path) -> ExperimentSpec {
    let mut s = ExperimentSpec::from_toml(
        r#"
name = "small"
seed = 7
trials = 2

[scenario]
elements_per_panel = 2
targets = [[0.5, 2.0, 1.0]]
clutters = [[1.0, 2.0, 2.0]]

[sweep]
axis = "n_tx"
values = [1, 2]
series = [1]
"#,
    )
    .unwrap();
    s.output.dir = dir.to_path_buf();
    s
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap()
}

#[test]
fn spec_toml_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let s = small_spec(dir.path());
    let back = ExperimentSpec::from_toml(&s.to_toml().unwrap()).unwrap();
    assert_eq!(back, s);
    assert_eq!(back.hash(), s.hash());
}

#[test]
fn empty_table_is_hash_and_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    write_table(&path, "abc", &TRIAL_HEADER, &[]).unwrap();
    let text = read(&path);
    assert_eq!(text, format!("# spec_hash=abc\n{}\n", TRIAL_HEADER.join(",")));
    assert!(read_trials(&path).unwrap().is_empty());
}

#[test]
fn rerun_is_byte_identical_and_csv_matches_memory() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let oa = run_experiment(&small_spec(a.path())).unwrap();
    let mut sb = small_spec(b.path());
    sb.workers = 2;
    let ob = run_experiment(&sb).unwrap();
    assert_eq!(ob.rows, oa.rows);
    assert_eq!(oa.rows.len(), 4);
    assert_eq!(oa.failed(), 0);
    for f in ["trials.csv", "summary.csv"] {
        assert_eq!(read(&a.path().join(f)), read(&b.path().join(f)), "{f} differs");
    }
    let parsed = read_trials(&a.path().join("trials.csv")).unwrap();
    assert_eq!(parsed.len(), oa.rows.len());
    for (p, r) in parsed.iter().zip(&oa.rows) {
        assert_eq!(p.to_record(), r.to_record());
    }
    let summary = summarize(&parsed);
    let text = read(&a.path().join("summary.csv"));
    let body: Vec<&str> = text.lines().skip(2).collect();
    assert_eq!(body.len(), summary.len());
    for (line, s) in body.iter().zip(&summary) {
        assert_eq!(*line, s.to_record().join(","));
    }
    assert!(text.lines().nth(1).unwrap() == SUMMARY_HEADER.join(","));
}

#[test]
fn summary_recomputes_from_trial_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_experiment(&small_spec(dir.path())).unwrap();
    for s in &out.summary {
        let db: Vec<f64> = out
            .rows
            .iter()
            .filter(|r| r.series == s.series && r.value == s.value && r.scheme == s.scheme && r.ok())
            .map(|r| r.sinr_db)
            .collect();
        let mean = db.iter().sum::<f64>() / db.len() as f64;
        assert!((mean - s.mean_db).abs() <= 1e-9);
    }
    // Rows hold six significant digits, so the dB identity holds to that.
    for r in &out.rows {
        assert!((r.sinr_db - 10.0 * r.sinr.log10()).abs() <= 1e-5 * r.sinr_db.abs());
    }
}

#[test]
fn trial_rows_report_decibels_of_the_linear_value() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(dir.path());
    let points = plan(&spec).unwrap();
    let (rows, trace) = run_trial(&spec, &points[1], 0);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].sinr_db, to_db(rows[0].sinr));
    assert_eq!(rows[0].sinr_db, 10.0 * rows[0].sinr.log10());
    assert!(trace["rhs"]["runtime_s"].as_f64().unwrap() >= 0.0);
}

#[test]
fn resume_skips_finished_trials() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = small_spec(dir.path());
    s.trials = 1;
    let first = run_experiment(&s).unwrap();
    assert_eq!((first.executed, first.skipped), (2, 0));
    let mut more = s.clone();
    more.trials = 2;
    // A different trial count is a different spec.
    assert!(matches!(run_experiment(&more), Err(Error::Spec(_))));
    let again = run_experiment(&s).unwrap();
    assert_eq!((again.executed, again.skipped), (0, 2));
    assert_eq!(again.rows, first.rows);
    let before = read(&dir.path().join("trials.csv"));
    more.output.overwrite = true;
    let replaced = run_experiment(&more).unwrap();
    assert_eq!((replaced.executed, replaced.skipped), (4, 0));
    assert_ne!(read(&dir.path().join("trials.csv")), before);
}

#[test]
fn interrupted_run_resumes_to_the_same_files() {
    let full = tempfile::tempdir().unwrap();
    run_experiment(&small_spec(full.path())).unwrap();
    let part = tempfile::tempdir().unwrap();
    run_experiment(&small_spec(part.path())).unwrap();
    // Drop the last trial row as if the run had been killed before it.
    let path = part.path().join("trials.csv");
    let text = read(&path);
    let mut lines: Vec<&str> = text.lines().collect();
    lines.pop();
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    let out = run_experiment(&small_spec(part.path())).unwrap();
    assert_eq!((out.executed, out.skipped), (1, 3));
    for f in ["trials.csv", "summary.csv"] {
        assert_eq!(read(&full.path().join(f)), read(&part.path().join(f)));
    }
}

#[test]
fn single_budget_point_gives_one_row_per_scheme() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = preset("fig2a").unwrap();
    s.trials = 1;
    s.sweep.values = vec![10.0];
    s.output.dir = dir.path().to_path_buf();
    let out = run_experiment(&s).unwrap();
    let schemes: Vec<&str> = out.rows.iter().map(|r| r.scheme.as_str()).collect();
    assert_eq!(schemes, vec!["rhs", "phased-d6", "phased-d8", "phased-d10"]);
    assert!(out.rows.iter().all(|r| fmt_num(r.value) == "10"));
    assert!(fs::read_to_string(dir.path().join("spec.toml")).unwrap().contains("desk-scale"));
}
