//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any of them fails. Run with
//! `cargo test --release -p rhs-radar --test acceptance`.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::Instant;

use rhs_radar::bench::validate::{consistency_error, feasibility_violation, optimizer_findings, rank_one_recovery};
use rhs_radar::bench::{compare_with_grid, oracle_scene, preset, run_experiment, ExperimentSpec, RunOutcome, SummaryRow};
use rhs_radar::draoa::DraoaConfig;
use rhs_radar::signal::SignalModel;

const SEED: u64 = 1;
const CONSISTENCY_INSTANCES: usize = 50;
const CONSISTENCY_TOLERANCE: f64 = 1e-8;
const CONSISTENCY_SECONDS: f64 = 10.0;
const OPTIMIZER_RUNS: usize = 20;
const ORACLE_STEP: f64 = 0.05;
const ORACLE_RATIO: f64 = 0.9;
const ORACLE_SECONDS: f64 = 120.0;
const ROUNDING_RATIO: f64 = 0.99;
const MIN_TRIALS: usize = 20;

#[derive(Default)]
struct Report {
    lines: BTreeMap<usize, (bool, String)>,
}

impl Report {
    fn line(&mut self, id: usize, name: &str, passed: bool, detail: String) {
        let text = format!("{} {id:>2} {name}: {detail}", if passed { "PASS" } else { "FAIL" });
        eprintln!("{text}");
        self.lines.insert(id, (passed, text));
    }

    fn failed(&self) -> usize {
        self.lines.values().filter(|(p, _)| !p).count()
    }
}

fn run_preset(name: &str, dir: &std::path::Path) -> RunOutcome {
    let mut spec = preset(name).expect("preset exists");
    assert!(spec.trials >= MIN_TRIALS);
    spec.output.dir = dir.join(name);
    spec.workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let started = Instant::now();
    let out = run_experiment(&spec).expect("preset runs");
    eprintln!("{name}: {} rows in {:.0} s", out.rows.len(), started.elapsed().as_secs_f64());
    out
}

/// Mean dB per sweep value for one (series, scheme), in sweep order.
fn curve(summary: &[SummaryRow], series: &str, scheme: &str) -> Vec<(f64, f64)> {
    summary
        .iter()
        .filter(|r| r.series == series && r.scheme == scheme)
        .map(|r| (r.value, r.mean_db))
        .collect()
}

fn fmt_curve(c: &[(f64, f64)]) -> String {
    c.iter().map(|(v, db)| format!("{v}:{db:.2}")).collect::<Vec<_>>().join(" ")
}

fn complete(out: &RunOutcome) -> bool {
    out.failed() == 0 && out.summary.iter().all(|r| r.trials_ok >= MIN_TRIALS)
}

fn main() -> ExitCode {
    let mut rep = Report::default();
    let work = tempfile::tempdir().expect("temp dir");

    // 1. Signal chain against the brute-force expansion.
    let started = Instant::now();
    let err = consistency_error(CONSISTENCY_INSTANCES, SEED).expect("consistency check runs");
    let secs = started.elapsed().as_secs_f64();
    rep.line(
        1,
        "consistency oracle",
        err < CONSISTENCY_TOLERANCE && secs < CONSISTENCY_SECONDS,
        format!("{CONSISTENCY_INSTANCES} instances, max relative error {err:.2e}, {secs:.2} s"),
    );

    // 2, 3 and 5 share the optimizer runs.
    let findings = optimizer_findings(OPTIMIZER_RUNS, SEED, &DraoaConfig::default()).expect("optimizer runs");
    let join = |v: &[String]| if v.is_empty() { "none".to_string() } else { v.join("; ") };
    rep.line(
        2,
        "monotone convergence",
        findings.failures.is_empty() && findings.chain_drops.is_empty() && findings.over_budget.is_empty(),
        format!(
            "{} runs; failures: {}; chain drops: {}; over budget: {}",
            findings.runs,
            join(&findings.failures),
            join(&findings.chain_drops),
            join(&findings.over_budget)
        ),
    );
    rep.line(
        3,
        "relaxation bound",
        findings.failures.is_empty() && findings.bound_violations.is_empty(),
        format!("{} runs; violations: {}", findings.runs, join(&findings.bound_violations)),
    );

    // 4. Grid oracle on the one-target, one-clutter scene.
    let scene = oracle_scene().expect("oracle scene");
    let started = Instant::now();
    let oracle = compare_with_grid(&scene, ORACLE_STEP, &DraoaConfig::default()).expect("oracle runs");
    let secs = started.elapsed().as_secs_f64();
    rep.line(
        4,
        "oracle near-optimality",
        oracle.ratio >= ORACLE_RATIO && secs < ORACLE_SECONDS,
        format!(
            "optimizer {:.4e}, grid {:.4e}, ratio {:.4}, {secs:.1} s",
            oracle.draoa.worst_case_sinr, oracle.grid.objective, oracle.ratio
        ),
    );

    // 6. Cost sweep against the phased baseline.
    let a = run_preset("fig2a", work.path());
    let rhs = curve(&a.summary, "cost", "rhs");
    let phased = curve(&a.summary, "cost", "phased-d10");
    let gaps: Vec<f64> = rhs.iter().zip(&phased).map(|(r, p)| r.1 - p.1).collect();
    let mean_gap = gaps.iter().sum::<f64>() / gaps.len() as f64;
    let rhs_rows_ok = a.rows.iter().filter(|r| r.scheme == "rhs").all(|r| r.ok());
    rep.line(
        6,
        "cost trend",
        rhs_rows_ok && !gaps.is_empty() && rhs.len() == phased.len() && gaps.iter().all(|g| *g > 0.0),
        format!(
            "rhs [{}], phased-d10 [{}], gap per budget [{}] dB, mean gap {mean_gap:.2} dB",
            fmt_curve(&rhs),
            fmt_curve(&phased),
            gaps.iter().map(|g| format!("{g:.2}")).collect::<Vec<_>>().join(" ")
        ),
    );

    // 7. Transmit panel sweep.
    let b = run_preset("fig2b", work.path());
    let mut ok7 = complete(&b);
    let mut detail = Vec::new();
    let series: Vec<String> = b.summary.iter().map(|r| r.series.clone()).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    for s in &series {
        let c = curve(&b.summary, s, "rhs");
        let by_p: BTreeMap<u64, f64> = c.iter().map(|(v, db)| (*v as u64, *db)).collect();
        let monotone = c.windows(2).all(|w| w[1].1 >= w[0].1);
        let diminishing = match (by_p.get(&1), by_p.get(&2), by_p.get(&3), by_p.get(&4)) {
            (Some(p1), Some(p2), Some(p3), Some(p4)) => p4 - p3 < p2 - p1,
            _ => false,
        };
        ok7 &= monotone && diminishing;
        detail.push(format!("{s}: [{}] monotone {monotone}, diminishing {diminishing}", fmt_curve(&c)));
    }
    rep.line(7, "transmit panel trend", ok7 && !series.is_empty(), detail.join("; "));

    // 8. Receive panel sweep at fixed element totals.
    let c = run_preset("fig2c", work.path());
    let spec_c: ExperimentSpec = preset("fig2c").unwrap();
    let totals = &spec_c.sweep.series;
    let label = |n: f64| format!("n_sum={n}");
    let small = curve(&c.summary, &label(totals[0]), "rhs");
    let large = curve(&c.summary, &label(*totals.last().unwrap()), "rhs");
    let small_ok = small.len() > 1 && small.windows(2).all(|w| w[1].1 <= w[0].1);
    let argmax = large
        .iter()
        .enumerate()
        .max_by(|x, y| x.1 .1.total_cmp(&y.1 .1))
        .map(|(i, _)| i);
    let large_ok = large.len() > 2 && matches!(argmax, Some(i) if i + 1 < large.len() && i > 0);
    rep.line(
        8,
        "receive panel trend",
        complete(&c) && small_ok && large_ok,
        format!(
            "{}: [{}] non-increasing {small_ok}; {}: [{}] interior maximum {large_ok}",
            label(totals[0]),
            fmt_curve(&small),
            label(*totals.last().unwrap()),
            fmt_curve(&large)
        ),
    );

    // 5. Feasibility of everything returned above.
    let oracle_model = SignalModel::new(&scene).expect("oracle model");
    let oracle_violation = feasibility_violation(&oracle_model, &oracle.draoa.beamformers);
    rep.line(
        5,
        "feasibility",
        findings.infeasible.is_empty() && oracle_violation.is_none(),
        format!(
            "{} optimizer runs and the oracle scene; violations: {}{}",
            findings.runs,
            join(&findings.infeasible),
            oracle_violation.map(|v| format!("; oracle: {v}")).unwrap_or_default()
        ),
    );

    // 9. Rank-one rounding.
    let ratio = rank_one_recovery(OPTIMIZER_RUNS, SEED).expect("rounding runs");
    rep.line(
        9,
        "rank-one rounding",
        ratio >= ROUNDING_RATIO,
        format!("{OPTIMIZER_RUNS} instances, worst ratio {ratio:.6}"),
    );

    // 10. Same spec and seed twice, fresh directories.
    let mut spec = preset("fig2b").unwrap();
    spec.trials = 2;
    spec.sweep.values = vec![1.0, 2.0];
    spec.workers = 2;
    let mut files = Vec::new();
    for run in ["d1", "d2"] {
        spec.output.dir = work.path().join(run);
        run_experiment(&spec).expect("determinism run");
        files.push(
            ["trials.csv", "summary.csv"]
                .map(|f| std::fs::read(spec.output.dir.join(f)).expect("output file")),
        );
    }
    rep.line(
        10,
        "determinism",
        files[0] == files[1],
        format!("{} trial bytes, {} summary bytes", files[0][0].len(), files[0][1].len()),
    );

    for (_, text) in rep.lines.values() {
        println!("{text}");
    }
    if rep.failed() == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{} criteria failed", rep.failed());
        ExitCode::FAILURE
    }
}
