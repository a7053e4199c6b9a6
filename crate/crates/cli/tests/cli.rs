use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rhs-radar"))
}

#[test]
fn validate_prints_passing_checks() {
    let out = bin()
        .args(["validate", "--instances", "5", "--runs", "3", "--seed", "4"])
        .output()
        .unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(out.status.success(), "{text}");
    assert_eq!(text.lines().count(), 7);
    assert!(text.lines().all(|l| l.starts_with("PASS ")));
}

#[test]
fn printed_presets_are_valid_specs() {
    for name in ["fig2a", "fig2b", "fig2c"] {
        let out = bin().args([name, "--print-spec"]).output().unwrap();
        assert!(out.status.success());
        let text = String::from_utf8(out.stdout).unwrap();
        let spec = rhs_radar::bench::ExperimentSpec::from_toml(&text).unwrap();
        assert_eq!(spec.name, name);
    }
}

#[test]
fn bad_spec_exits_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "trials = 0\n[sweep]\naxis = \"n_tx\"\nvalues = [1]\n").unwrap();
    let out = bin().arg("run").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("trials"));
    let out = bin().arg("run").arg(dir.path().join("missing.toml")).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn run_writes_outputs_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("s.toml");
    std::fs::write(
        &spec,
        "seed = 3\ntrials = 1\n[scenario]\nelements_per_panel = 2\n[sweep]\naxis = \"n_tx\"\nvalues = [1]\nseries = [1]\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let run = || {
        bin()
            .arg("run")
            .arg(&spec)
            .arg("--out")
            .arg(&out_dir)
            .output()
            .unwrap()
    };
    let first = run();
    assert!(first.status.success());
    for f in ["trials.csv", "summary.csv", "trace.jsonl", "spec.toml"] {
        assert!(out_dir.join(f).exists(), "{f} missing");
    }
    let second = run();
    assert!(second.status.success());
    assert!(String::from_utf8(second.stdout).unwrap().contains("0 trials run, 1 reused"));
    let other = bin()
        .arg("run")
        .arg(&spec)
        .args(["--seed", "4", "--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(other.status.code(), Some(2));
}
