//! Sweep planning and Monte Carlo execution.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::time::Instant;

use rand::RngCore;
use rayon::prelude::*;

use super::spec::{ExperimentSpec, PointConfig, SweepAxis};
use super::table::{
    read_hash, read_trials, summarize, write_table, RowKey, SummaryRow, TrialAppender, TrialRow, RHS_SCHEME,
    SUMMARY_HEADER, TRIAL_HEADER,
};
use crate::baseline::{equivalent_config, phased_mimo_beamform, phased_sinr, CostModel, PhasedScene};
use crate::draoa::{run_draoa, DraoaConfig};
use crate::error::{Error, Result};
use crate::scenario::{trial_rng, StreamPurpose};
use crate::signal::{sinr_per_pair, SignalModel};

pub const TRIALS_FILE: &str = "trials.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const TRACE_FILE: &str = "trace.jsonl";
pub const SPEC_FILE: &str = "spec.toml";

/// One array type evaluated at a sweep point.
#[derive(Debug, Clone, PartialEq)]
pub enum Scheme {
    Rhs {
        /// Radiated power cap per transmit panel.
        p_max: f64,
        cost: f64,
    },
    Phased {
        delta: f64,
        /// Elements per subarray; `Err` when the budget buys none.
        elements: std::result::Result<usize, String>,
        radiated: f64,
        cost: f64,
    },
}

impl Scheme {
    pub fn label(&self) -> String {
        match self {
            Scheme::Rhs { .. } => RHS_SCHEME.into(),
            Scheme::Phased { delta, .. } => phased_label(*delta),
        }
    }
}

pub fn phased_label(delta: f64) -> String {
    format!("phased-d{}", super::table::fmt_num(delta))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub series: String,
    pub value: f64,
    pub point: PointConfig,
    pub schemes: Vec<Scheme>,
}

/// Expands the sweep block into concrete points, in output order.
pub fn plan(spec: &ExperimentSpec) -> Result<Vec<SweepPoint>> {
    spec.validate()?;
    let sc = &spec.scenario;
    let sw = &spec.sweep;
    let unit = spec.baseline.cost.rhs_unit_cost();
    let rhs_only = |point: PointConfig| {
        vec![Scheme::Rhs {
            p_max: sc.p_max,
            cost: ((point.n_tx + point.n_rx) * point.elements_per_panel) as f64 * unit,
        }]
    };
    let per_panel = |n_sum: f64, p: usize, q: usize| -> Result<usize> {
        let n = (n_sum as usize) / (p + q);
        if n == 0 {
            return Err(Error::Spec(format!("{n_sum} elements cannot populate {p} + {q} panels")));
        }
        Ok(n)
    };
    let mut out = Vec::new();
    match sw.axis {
        SweepAxis::NTx => {
            let series = if sw.series.is_empty() { vec![sc.n_rx as f64] } else { sw.series.clone() };
            for q in series {
                for &p in &sw.values {
                    let point = PointConfig {
                        n_tx: p as usize,
                        n_rx: q as usize,
                        elements_per_panel: sc.elements_per_panel,
                    };
                    out.push(SweepPoint {
                        series: format!("q={q}"),
                        value: p,
                        point,
                        schemes: rhs_only(point),
                    });
                }
            }
        }
        SweepAxis::NRx => {
            if sw.series.is_empty() {
                for &q in &sw.values {
                    let point = PointConfig {
                        n_tx: sc.n_tx,
                        n_rx: q as usize,
                        elements_per_panel: sc.elements_per_panel,
                    };
                    out.push(SweepPoint {
                        series: format!("p={}", sc.n_tx),
                        value: q,
                        point,
                        schemes: rhs_only(point),
                    });
                }
            } else {
                for &n_sum in &sw.series {
                    for &q in &sw.values {
                        let n = per_panel(n_sum, sc.n_tx, q as usize)?;
                        let point = PointConfig {
                            n_tx: sc.n_tx,
                            n_rx: q as usize,
                            elements_per_panel: n,
                        };
                        out.push(SweepPoint {
                            series: format!("n_sum={n_sum}"),
                            value: q,
                            point,
                            schemes: rhs_only(point),
                        });
                    }
                }
            }
        }
        SweepAxis::NSumAllocation => {
            for &q in &sw.series {
                for &n_sum in &sw.values {
                    let n = per_panel(n_sum, sc.n_tx, q as usize)?;
                    let point = PointConfig {
                        n_tx: sc.n_tx,
                        n_rx: q as usize,
                        elements_per_panel: n,
                    };
                    out.push(SweepPoint {
                        series: format!("q={q}"),
                        value: n_sum,
                        point,
                        schemes: rhs_only(point),
                    });
                }
            }
        }
        SweepAxis::CostBudget => {
            let bl = &spec.baseline;
            let (p, q) = (sc.n_tx, sc.n_rx);
            let panels = (p + q) as f64;
            for &b in &sw.values {
                let n_rhs = b as usize;
                let point = PointConfig {
                    n_tx: p,
                    n_rx: q,
                    elements_per_panel: n_rhs,
                };
                let mut schemes = vec![Scheme::Rhs {
                    p_max: bl.cost.eta_rhs * bl.consumed_power,
                    cost: panels * b * unit,
                }];
                if bl.enabled {
                    for &delta in &bl.deltas {
                        let cm = CostModel { delta, ..bl.cost };
                        let budget = b * cm.rhs_unit_cost();
                        let eq = equivalent_config(budget, p as f64 * bl.consumed_power, &cm, p, q);
                        schemes.push(match eq {
                            Ok(eq) => Scheme::Phased {
                                delta,
                                elements: Ok(eq.n_phased_per_panel),
                                radiated: eq.phased_radiated,
                                cost: panels * eq.phased_cost,
                            },
                            Err(e) => Scheme::Phased {
                                delta,
                                elements: Err(e.to_string()),
                                radiated: cm.eta_phased * bl.consumed_power,
                                cost: 0.0,
                            },
                        });
                    }
                }
                out.push(SweepPoint {
                    series: "cost".into(),
                    value: b,
                    point,
                    schemes,
                });
            }
        }
    }
    Ok(out)
}

/// Seed of the optimizer's own streams in one trial.
pub fn optimizer_seed(seed: u64, trial: u64) -> u64 {
    trial_rng(seed, trial, StreamPurpose::Optimizer).next_u64()
}

fn failed_row(sp: &SweepPoint, scheme: &Scheme, trial: u64, elements: usize, cost: f64, e: &str) -> TrialRow {
    TrialRow {
        series: sp.series.clone(),
        value: sp.value,
        scheme: scheme.label(),
        trial,
        n_tx: sp.point.n_tx,
        n_rx: sp.point.n_rx,
        elements_per_panel: elements,
        cost,
        error: Some(e.to_string()),
        sinr: f64::NAN,
        sinr_db: f64::NAN,
        design_sinr_db: f64::NAN,
        bound_db: None,
        outer_iterations: None,
        sdp_solves: None,
        ipm_iterations: None,
        restarts: None,
    }
}

/// Runs every scheme of one sweep point for one trial. Failures become
/// rows with an error message. Returns the rows and a trace record.
pub fn run_trial(spec: &ExperimentSpec, sp: &SweepPoint, trial: u64) -> (Vec<TrialRow>, serde_json::Value) {
    let mut rows = Vec::with_capacity(sp.schemes.len());
    let mut trace = serde_json::json!({
        "series": sp.series,
        "value": sp.value,
        "trial": trial,
    });
    for scheme in &sp.schemes {
        match scheme {
            Scheme::Rhs { p_max, cost } => {
                let started = Instant::now();
                let cfg = DraoaConfig {
                    rng_seed: optimizer_seed(spec.seed, trial),
                    ..spec.draoa
                };
                let mut scenario = spec.scenario.clone();
                scenario.p_max = *p_max;
                let res = (|| {
                    let design = scenario.build_scene(sp.point, spec.seed, trial)?;
                    let eval = scenario.evaluation_scene(sp.point, spec.seed, trial)?;
                    let r = run_draoa(&design, &cfg)?;
                    let report = sinr_per_pair(&SignalModel::new(&eval)?, &r.beamformers)?;
                    Ok::<_, Error>((r, report))
                })();
                let runtime = started.elapsed().as_secs_f64();
                match res {
                    Ok((r, report)) => {
                        trace["rhs"] = serde_json::json!({
                            "runtime_s": runtime,
                            "iterations": r.trace,
                            "u_chain": r.u_chain,
                            "rounding": r.rounding,
                            "sinr_db": report.worst_case_db,
                        });
                        rows.push(TrialRow {
                            series: sp.series.clone(),
                            value: sp.value,
                            scheme: scheme.label(),
                            trial,
                            n_tx: sp.point.n_tx,
                            n_rx: sp.point.n_rx,
                            elements_per_panel: sp.point.elements_per_panel,
                            cost: *cost,
                            error: None,
                            sinr: report.worst_case,
                            sinr_db: report.worst_case_db,
                            design_sinr_db: r.worst_case_sinr_db,
                            bound_db: Some(10.0 * r.relaxed_bound.log10()),
                            outer_iterations: Some(r.trace.len()),
                            sdp_solves: Some(r.sdp_solves),
                            ipm_iterations: Some(r.ipm_iterations),
                            restarts: Some(r.rounding.restarts),
                        });
                    }
                    Err(e) => {
                        log::warn!("{} {} trial {trial}: {e}", sp.series, sp.value);
                        let partial = match &e {
                            Error::Aborted { trace, .. } => serde_json::to_value(trace).unwrap_or_default(),
                            _ => serde_json::Value::Null,
                        };
                        trace["rhs"] = serde_json::json!({
                            "runtime_s": runtime,
                            "error": e.to_string(),
                            "iterations": partial,
                        });
                        rows.push(failed_row(sp, scheme, trial, sp.point.elements_per_panel, *cost, &e.to_string()));
                    }
                }
            }
            Scheme::Phased {
                elements,
                radiated,
                cost,
                ..
            } => {
                let n = match elements {
                    Ok(n) => *n,
                    Err(msg) => {
                        rows.push(failed_row(sp, scheme, trial, 0, *cost, msg));
                        continue;
                    }
                };
                let res = (|| {
                    let design = spec.scenario.build_scene(sp.point, spec.seed, trial)?;
                    let eval = spec.scenario.evaluation_scene(sp.point, spec.seed, trial)?;
                    let out = phased_mimo_beamform(&PhasedScene::from_scene(&design, n, *radiated)?, spec.baseline.rule)?;
                    let ps_eval = PhasedScene::from_scene(&eval, n, *radiated)?;
                    let report = phased_sinr(&ps_eval, &out.tx_weights, &out.rx_weights)?;
                    Ok::<_, Error>((out, report))
                })();
                match res {
                    Ok((out, report)) => rows.push(TrialRow {
                        series: sp.series.clone(),
                        value: sp.value,
                        scheme: scheme.label(),
                        trial,
                        n_tx: sp.point.n_tx,
                        n_rx: sp.point.n_rx,
                        elements_per_panel: n,
                        cost: *cost,
                        error: None,
                        sinr: report.worst_case,
                        sinr_db: report.worst_case_db,
                        design_sinr_db: out.report.worst_case_db,
                        bound_db: None,
                        outer_iterations: None,
                        sdp_solves: None,
                        ipm_iterations: None,
                        restarts: None,
                    }),
                    Err(e) => rows.push(failed_row(sp, scheme, trial, n, *cost, &e.to_string())),
                }
            }
        }
    }
    (rows, trace)
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub spec_hash: String,
    /// All rows in output order, including those kept from an earlier run.
    pub rows: Vec<TrialRow>,
    pub summary: Vec<SummaryRow>,
    /// Trials executed now and trials found complete on disk.
    pub executed: usize,
    pub skipped: usize,
}

impl RunOutcome {
    pub fn failed(&self) -> usize {
        self.rows.iter().filter(|r| !r.ok()).count()
    }
}

fn remove_if_present(path: &Path) -> Result<()> {
    match std::fs::remove_file(path) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
        Err(e) => Err(Error::io(path, e)),
    }
}

/// Runs an experiment into `spec.output.dir`, resuming from rows already
/// on disk when they were produced by the same spec.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<RunOutcome> {
    let points = plan(spec)?;
    let hash = spec.hash();
    let dir = spec.output.dir.clone();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let trials_path = dir.join(TRIALS_FILE);
    let summary_path = dir.join(SUMMARY_FILE);
    let trace_path = dir.join(TRACE_FILE);

    let mut previous = Vec::new();
    if trials_path.exists() {
        let same = read_hash(&trials_path)?.as_deref() == Some(hash.as_str());
        if spec.output.overwrite {
            for p in [&trials_path, &summary_path, &trace_path] {
                remove_if_present(p)?;
            }
        } else if !same {
            return Err(Error::Spec(format!(
                "{} holds results of a different spec; set output.overwrite to replace them",
                trials_path.display()
            )));
        } else {
            previous = read_trials(&trials_path)?;
        }
    }
    let spec_path = dir.join(SPEC_FILE);
    std::fs::write(&spec_path, spec.to_toml()?).map_err(|e| Error::io(&spec_path, e))?;

    let done: HashSet<RowKey> = previous.iter().map(|r| r.key()).collect();
    let mut jobs = Vec::new();
    let mut skipped = 0;
    for (i, sp) in points.iter().enumerate() {
        for trial in 0..spec.trials as u64 {
            let complete = sp.schemes.iter().all(|s| {
                done.contains(&RowKey {
                    series: sp.series.clone(),
                    value: super::table::fmt_num(sp.value),
                    scheme: s.label(),
                    trial,
                })
            });
            if complete {
                skipped += 1;
            } else {
                jobs.push((i, trial));
            }
        }
    }
    log::info!("{}: {} trials to run, {} already done", spec.name, jobs.len(), skipped);

    let mut fresh: Vec<TrialRow> = Vec::new();
    if !jobs.is_empty() {
        let mut appender = TrialAppender::open(&trials_path, &hash)?;
        let mut trace_file = if spec.output.trace {
            Some(
                std::fs::OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(&trace_path)
                    .map_err(|e| Error::io(&trace_path, e))?,
            )
        } else {
            None
        };
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(spec.workers)
            .build()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let (tx, rx) = mpsc::channel::<(Vec<TrialRow>, serde_json::Value)>();
        let total = jobs.len();
        let write_result = std::thread::scope(|s| -> Result<()> {
            let points = &points;
            let jobs = &jobs;
            s.spawn(move || {
                pool.install(|| {
                    jobs.par_iter().for_each_with(tx, |tx, &(i, trial)| {
                        let _ = tx.send(run_trial(spec, &points[i], trial));
                    });
                });
            });
            // Single writer: rows reach disk as trials finish.
            for (n, (rows, trace)) in rx.iter().enumerate() {
                // Keep rows at output precision so that summaries do not
                // depend on which rows were read back from an earlier run.
                let rows: Vec<TrialRow> = rows.iter().map(TrialRow::as_written).collect();
                appender.append(&rows)?;
                if let Some(f) = trace_file.as_mut() {
                    writeln!(f, "{trace}").map_err(|e| Error::io(&trace_path, e))?;
                }
                log::info!("{}: {}/{} trials", spec.name, n + 1, total);
                fresh.extend(rows);
            }
            Ok(())
        });
        write_result?;
    }
    let executed = jobs.len();

    // Final rewrite in plan order so the files do not depend on completion
    // order or on how the run was split up.
    let series_rank: HashMap<&str, usize> = {
        let mut m = HashMap::new();
        for sp in &points {
            let next = m.len();
            m.entry(sp.series.as_str()).or_insert(next);
        }
        m
    };
    let scheme_rank = |s: &str| -> usize {
        points
            .iter()
            .flat_map(|sp| sp.schemes.iter().map(|x| x.label()))
            .position(|l| l == s)
            .unwrap_or(usize::MAX)
    };
    let mut merged: BTreeMap<RowKey, TrialRow> = BTreeMap::new();
    for r in previous.into_iter().chain(fresh) {
        merged.insert(r.key(), r);
    }
    let mut rows: Vec<TrialRow> = merged.into_values().collect();
    rows.sort_by(|a, b| {
        let ka = (series_rank.get(a.series.as_str()).copied().unwrap_or(usize::MAX), a.value);
        let kb = (series_rank.get(b.series.as_str()).copied().unwrap_or(usize::MAX), b.value);
        ka.0.cmp(&kb.0)
            .then(ka.1.total_cmp(&kb.1))
            .then(scheme_rank(&a.scheme).cmp(&scheme_rank(&b.scheme)))
            .then(a.trial.cmp(&b.trial))
    });
    let records: Vec<Vec<String>> = rows.iter().map(|r| r.to_record()).collect();
    write_table(&trials_path, &hash, &TRIAL_HEADER, &records)?;
    let summary = summarize(&rows);
    let records: Vec<Vec<String>> = summary.iter().map(|r| r.to_record()).collect();
    write_table(&summary_path, &hash, &SUMMARY_HEADER, &records)?;

    Ok(RunOutcome {
        dir,
        spec_hash: hash,
        rows,
        summary,
        executed,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(text: &str) -> ExperimentSpec {
        ExperimentSpec::from_toml(text).unwrap()
    }

    #[test]
    fn n_tx_plan_uses_series_as_receive_counts() {
        let s = spec("[sweep]\naxis = \"n_tx\"\nvalues = [1, 2]\nseries = [1, 2]\n");
        let pts = plan(&s).unwrap();
        assert_eq!(pts.len(), 4);
        assert_eq!(pts[0].series, "q=1");
        assert_eq!((pts[3].point.n_tx, pts[3].point.n_rx), (2, 2));
    }

    #[test]
    fn fixed_total_splits_elements() {
        let s = spec("[scenario]\nn_tx = 2\n[sweep]\naxis = \"n_rx\"\nvalues = [1, 2, 3]\nseries = [60]\n");
        let n: Vec<usize> = plan(&s).unwrap().iter().map(|p| p.point.elements_per_panel).collect();
        assert_eq!(n, vec![20, 15, 12]);
        let s = spec("[scenario]\nn_tx = 2\n[sweep]\naxis = \"n_sum_allocation\"\nvalues = [2]\nseries = [1]\n");
        assert!(plan(&s).is_err());
    }

    #[test]
    fn cost_plan_matches_budgets() {
        let s = spec(
            "[sweep]\naxis = \"cost_budget\"\nvalues = [10, 20]\n[baseline]\nenabled = true\ndeltas = [8.0, 10.0]\n",
        );
        let pts = plan(&s).unwrap();
        let labels: Vec<String> = pts[1].schemes.iter().map(|s| s.label()).collect();
        assert_eq!(labels, vec!["rhs", "phased-d8", "phased-d10"]);
        match (&pts[1].schemes[0], &pts[1].schemes[2]) {
            (Scheme::Rhs { p_max, cost }, Scheme::Phased { elements, radiated, cost: pc, .. }) => {
                assert!((p_max - 4e-3).abs() < 1e-15);
                assert_eq!(*elements, Ok(2));
                assert!((radiated - 0.64e-3).abs() < 1e-15);
                assert_eq!(cost, pc);
            }
            _ => unreachable!(),
        }
        match &pts[0].schemes[1] {
            Scheme::Phased { elements, .. } => assert_eq!(*elements, Ok(1)),
            _ => unreachable!(),
        }
    }
}
