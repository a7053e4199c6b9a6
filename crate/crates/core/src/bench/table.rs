//! Trial and summary rows, their CSV form, and number formatting.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Scheme label of the optimized RHS rows.
pub const RHS_SCHEME: &str = "rhs";

/// Outcome of one scheme in one trial at one sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRow {
    pub series: String,
    pub value: f64,
    pub scheme: String,
    pub trial: u64,
    pub n_tx: usize,
    pub n_rx: usize,
    pub elements_per_panel: usize,
    /// Hardware cost of all panels of this scheme.
    pub cost: f64,
    pub error: Option<String>,
    /// Worst-case average SINR on the scoring scene, linear.
    pub sinr: f64,
    pub sinr_db: f64,
    /// The same beamformers on the scene they were designed on.
    pub design_sinr_db: f64,
    pub bound_db: Option<f64>,
    pub outer_iterations: Option<usize>,
    pub sdp_solves: Option<usize>,
    pub ipm_iterations: Option<usize>,
    pub restarts: Option<usize>,
}

impl TrialRow {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }

    pub fn key(&self) -> RowKey {
        RowKey {
            series: self.series.clone(),
            value: fmt_num(self.value),
            scheme: self.scheme.clone(),
            trial: self.trial,
        }
    }
}

/// Identity of a trial row, with the sweep value in its printed form.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RowKey {
    pub series: String,
    pub value: String,
    pub scheme: String,
    pub trial: u64,
}

pub const TRIAL_HEADER: [&str; 18] = [
    "series",
    "value",
    "scheme",
    "trial",
    "n_tx",
    "n_rx",
    "elements_per_panel",
    "cost",
    "status",
    "sinr",
    "sinr_db",
    "design_sinr_db",
    "bound_db",
    "outer_iterations",
    "sdp_solves",
    "ipm_iterations",
    "restarts",
    "error",
];

/// Six significant digits; plain notation in the usual range, exponent
/// notation outside it.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let rounded: f64 = sci.parse().expect("formatted float parses");
    let a = rounded.abs();
    if (1e-4..1e9).contains(&a) {
        format!("{rounded}")
    } else {
        let (mant, exp) = sci.split_once('e').expect("exponent present");
        let mant = if mant.contains('.') {
            mant.trim_end_matches('0').trim_end_matches('.')
        } else {
            mant
        };
        format!("{mant}e{exp}")
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn parse_num(s: &str) -> Option<f64> {
    match s {
        "nan" => Some(f64::NAN),
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        _ => s.parse().ok(),
    }
}

impl TrialRow {
    pub fn to_record(&self) -> Vec<String> {
        vec![
            self.series.clone(),
            fmt_num(self.value),
            self.scheme.clone(),
            self.trial.to_string(),
            self.n_tx.to_string(),
            self.n_rx.to_string(),
            self.elements_per_panel.to_string(),
            fmt_num(self.cost),
            if self.ok() { "ok".into() } else { "failed".into() },
            fmt_num(self.sinr),
            fmt_num(self.sinr_db),
            fmt_num(self.design_sinr_db),
            self.bound_db.map(fmt_num).unwrap_or_default(),
            opt(self.outer_iterations),
            opt(self.sdp_solves),
            opt(self.ipm_iterations),
            opt(self.restarts),
            self.error.clone().unwrap_or_default(),
        ]
    }

    pub fn from_record(r: &csv::StringRecord) -> Option<TrialRow> {
        if r.len() != TRIAL_HEADER.len() {
            return None;
        }
        let count = |i: usize| -> Option<Option<usize>> {
            if r[i].is_empty() {
                Some(None)
            } else {
                r[i].parse().ok().map(Some)
            }
        };
        Some(TrialRow {
            series: r[0].to_string(),
            value: parse_num(&r[1])?,
            scheme: r[2].to_string(),
            trial: r[3].parse().ok()?,
            n_tx: r[4].parse().ok()?,
            n_rx: r[5].parse().ok()?,
            elements_per_panel: r[6].parse().ok()?,
            cost: parse_num(&r[7])?,
            error: if &r[8] == "ok" { None } else { Some(r[17].to_string()) },
            sinr: parse_num(&r[9])?,
            sinr_db: parse_num(&r[10])?,
            design_sinr_db: parse_num(&r[11])?,
            bound_db: if r[12].is_empty() { None } else { Some(parse_num(&r[12])?) },
            outer_iterations: count(13)?,
            sdp_solves: count(14)?,
            ipm_iterations: count(15)?,
            restarts: count(16)?,
        })
    }

    /// The row as it reads back from CSV, with numbers at output precision.
    pub fn as_written(&self) -> TrialRow {
        TrialRow::from_record(&csv::StringRecord::from(self.to_record())).expect("own record parses")
    }
}

/// Per (series, value, scheme) statistics over the successful trials.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub series: String,
    pub value: f64,
    pub scheme: String,
    pub trials_ok: usize,
    pub trials_failed: usize,
    /// Mean of the per-trial dB values.
    pub mean_db: f64,
    pub std_db: f64,
    pub min_db: f64,
    pub max_db: f64,
    pub mean_linear: f64,
    pub mean_design_db: f64,
    pub mean_bound_db: Option<f64>,
    pub cost: f64,
}

pub const SUMMARY_HEADER: [&str; 13] = [
    "series",
    "value",
    "scheme",
    "trials_ok",
    "trials_failed",
    "mean_db",
    "std_db",
    "min_db",
    "max_db",
    "mean_linear",
    "mean_design_db",
    "mean_bound_db",
    "cost",
];

impl SummaryRow {
    pub fn to_record(&self) -> Vec<String> {
        vec![
            self.series.clone(),
            fmt_num(self.value),
            self.scheme.clone(),
            self.trials_ok.to_string(),
            self.trials_failed.to_string(),
            fmt_num(self.mean_db),
            fmt_num(self.std_db),
            fmt_num(self.min_db),
            fmt_num(self.max_db),
            fmt_num(self.mean_linear),
            fmt_num(self.mean_design_db),
            self.mean_bound_db.map(fmt_num).unwrap_or_default(),
            fmt_num(self.cost),
        ]
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Groups rows that are already in output order; group order is kept.
pub fn summarize(rows: &[TrialRow]) -> Vec<SummaryRow> {
    let mut order: Vec<(String, String, String)> = Vec::new();
    let mut groups: BTreeMap<(String, String, String), Vec<&TrialRow>> = BTreeMap::new();
    for r in rows {
        let k = (r.series.clone(), fmt_num(r.value), r.scheme.clone());
        if !groups.contains_key(&k) {
            order.push(k.clone());
        }
        groups.entry(k).or_default().push(r);
    }
    order
        .into_iter()
        .map(|k| {
            let g = &groups[&k];
            let ok: Vec<&&TrialRow> = g.iter().filter(|r| r.ok()).collect();
            let db: Vec<f64> = ok.iter().map(|r| r.sinr_db).collect();
            let m = mean(&db);
            let std = if db.len() > 1 {
                (db.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (db.len() - 1) as f64).sqrt()
            } else {
                0.0
            };
            let bounds: Vec<f64> = ok.iter().filter_map(|r| r.bound_db).collect();
            SummaryRow {
                series: k.0.clone(),
                value: g[0].value,
                scheme: k.2.clone(),
                trials_ok: ok.len(),
                trials_failed: g.len() - ok.len(),
                mean_db: m,
                std_db: std,
                min_db: db.iter().copied().fold(f64::NAN, f64::min),
                max_db: db.iter().copied().fold(f64::NAN, f64::max),
                mean_linear: mean(&ok.iter().map(|r| r.sinr).collect::<Vec<_>>()),
                mean_design_db: mean(&ok.iter().map(|r| r.design_sinr_db).collect::<Vec<_>>()),
                mean_bound_db: if bounds.is_empty() { None } else { Some(mean(&bounds)) },
                cost: g[0].cost,
            }
        })
        .collect()
}

/// First line of every CSV output.
pub fn hash_line(hash: &str) -> String {
    format!("# spec_hash={hash}")
}

/// Hash recorded in the first line of a CSV output, if any.
pub fn read_hash(path: &Path) -> Result<Option<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .next()
        .and_then(|l| l.strip_prefix("# spec_hash="))
        .map(|h| h.trim().to_string()))
}

fn output_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Output {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Trial rows from a previous run; malformed lines are an error.
pub fn read_trials(path: &Path) -> Result<Vec<TrialRow>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| output_err(path, e))?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| output_err(path, e))?;
        let row = TrialRow::from_record(&rec).ok_or_else(|| output_err(path, format!("malformed row {rec:?}")))?;
        rows.push(row);
    }
    Ok(rows)
}

/// Writes a whole table: hash line, header, records.
pub fn write_table(path: &Path, hash: &str, header: &[&str], records: &[Vec<String>]) -> Result<()> {
    let mut buf = Vec::new();
    writeln!(buf, "{}", hash_line(hash)).map_err(|e| Error::io(path, e))?;
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(header).map_err(|e| output_err(path, e))?;
        for r in records {
            w.write_record(r).map_err(|e| output_err(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Appends rows to an open trial file, writing hash and header first when
/// the file is new.
pub struct TrialAppender {
    file: std::fs::File,
    path: std::path::PathBuf,
}

impl TrialAppender {
    pub fn open(path: &Path, hash: &str) -> Result<Self> {
        let fresh = !path.exists();
        let mut file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        if fresh {
            let mut buf = Vec::new();
            writeln!(buf, "{}", hash_line(hash)).map_err(|e| Error::io(path, e))?;
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(TRIAL_HEADER).map_err(|e| output_err(path, e))?;
            drop(w);
            file.write_all(&buf).map_err(|e| Error::io(path, e))?;
        }
        Ok(TrialAppender {
            file,
            path: path.to_path_buf(),
        })
    }

    pub fn append(&mut self, rows: &[TrialRow]) -> Result<()> {
        let mut buf = Vec::new();
        {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(&mut buf);
            for r in rows {
                w.write_record(r.to_record()).map_err(|e| output_err(&self.path, e))?;
            }
        }
        self.file.write_all(&buf).map_err(|e| Error::io(&self.path, e))?;
        self.file.flush().map_err(|e| Error::io(&self.path, e))
    }
}
