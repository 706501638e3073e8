//! Run artifacts: JSONL round records, summary CSV, diagnostics JSON and
//! the echoed configuration.
//!
//! Floats in the JSONL and CSV files are written with 17 significant digits
//! so that two runs compare byte-for-byte exactly when their values do.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::ser::{Serialize, Serializer};
use serde_json::value::RawValue;

use crate::sim::{RoundRecord, RunOutput};
use crate::{Error, Result};

pub const RECORDS_FILE: &str = "records.jsonl";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.json";
pub const CONFIG_FILE: &str = "config.toml";
pub const GEOMETRY_FILE: &str = "geometry.json";

/// Column order of the summary CSV.
pub const SUMMARY_HEADER: [&str; 9] = [
    "t",
    "N_t",
    "alpha",
    "error_sq",
    "loss",
    "accuracy",
    "cumulative_energy",
    "cumulative_consumed",
    "mean_tau",
];

/// Fixed-precision float: 17 significant digits, `null` when not finite.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        "null".to_string()
    }
}

struct F17(f64);

impl Serialize for F17 {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let raw = RawValue::from_string(fmt_f64(self.0)).map_err(serde::ser::Error::custom)?;
        raw.serialize(s)
    }
}

fn floats(v: &[f64]) -> Vec<F17> {
    v.iter().map(|&x| F17(x)).collect()
}

fn opt(v: Option<f64>) -> Option<F17> {
    v.map(F17)
}

#[derive(serde::Serialize)]
struct RecordLine<'a> {
    t: usize,
    active_ids: &'a [usize],
    n_active: usize,
    tau_per_device: &'a [u32],
    fractions: Vec<F17>,
    alpha: Option<F17>,
    error_sq: Option<F17>,
    phi: F17,
    global_loss: Option<F17>,
    test_accuracy: Option<F17>,
    grad_norm_sq: Option<F17>,
    local_grad_norms_sq: Vec<F17>,
    harvested: Vec<F17>,
    consumed: Vec<F17>,
    discarded: Vec<F17>,
    battery_before: Vec<F17>,
    battery_after: Vec<F17>,
    cumulative_consumed: F17,
    cumulative_discarded: F17,
    cumulative_energy: F17,
}

/// One JSON object, no trailing newline.
pub fn record_to_json(r: &RoundRecord) -> String {
    let line = RecordLine {
        t: r.t,
        active_ids: &r.active_ids,
        n_active: r.n_active,
        tau_per_device: &r.tau_per_device,
        fractions: floats(&r.fractions),
        alpha: opt(r.alpha),
        error_sq: opt(r.error_sq),
        phi: F17(r.phi),
        global_loss: opt(r.global_loss),
        test_accuracy: opt(r.test_accuracy),
        grad_norm_sq: opt(r.grad_norm_sq),
        local_grad_norms_sq: floats(&r.local_grad_norms_sq),
        harvested: floats(&r.harvested),
        consumed: floats(&r.consumed),
        discarded: floats(&r.discarded),
        battery_before: floats(&r.battery_before),
        battery_after: floats(&r.battery_after),
        cumulative_consumed: F17(r.cumulative_consumed),
        cumulative_discarded: F17(r.cumulative_discarded),
        cumulative_energy: F17(r.cumulative_energy),
    };
    serde_json::to_string(&line).expect("record serialization cannot fail")
}

pub fn write_records_jsonl<W: Write>(records: &[RoundRecord], mut w: W) -> std::io::Result<()> {
    for r in records {
        w.write_all(record_to_json(r).as_bytes())?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

fn cell(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

pub fn summary_row(r: &RoundRecord) -> [String; 9] {
    let mean_tau = (!r.tau_per_device.is_empty()).then(|| {
        r.tau_per_device.iter().map(|&t| f64::from(t)).sum::<f64>() / r.tau_per_device.len() as f64
    });
    [
        r.t.to_string(),
        r.n_active.to_string(),
        cell(r.alpha),
        cell(r.error_sq),
        cell(r.global_loss),
        cell(r.test_accuracy),
        fmt_f64(r.cumulative_energy),
        fmt_f64(r.cumulative_consumed),
        cell(mean_tau),
    ]
}

pub fn write_summary_csv<W: Write>(records: &[RoundRecord], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SUMMARY_HEADER)?;
    for r in records {
        out.write_record(summary_row(r))?;
    }
    out.flush()?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Writes every artifact of `out` into `dir` (created if missing).
pub fn write_run(out: &RunOutput, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(RECORDS_FILE);
    write_records_jsonl(&out.records, create(&path)?).map_err(|e| Error::io(&path, e))?;

    let path = dir.join(SUMMARY_FILE);
    write_summary_csv(&out.records, create(&path)?).map_err(|e| Error::Report {
        dir: dir.to_path_buf(),
        message: e.to_string(),
    })?;

    let diag = serde_json::json!({
        "initial_loss": out.initial_loss,
        "initial_accuracy": out.initial_accuracy,
        "final_accuracy": out.final_accuracy(),
        "convergence": out.diagnostics,
    });
    write_string(&dir.join(DIAGNOSTICS_FILE), &pretty(&diag))?;
    write_string(&dir.join(CONFIG_FILE), &out.config.emit())?;
    write_string(&dir.join(GEOMETRY_FILE), &pretty(&out.geometry))?;
    Ok(())
}

fn pretty<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn write_string(path: &Path, s: &str) -> Result<()> {
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// One parsed row of a summary CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub t: usize,
    pub n_active: usize,
    pub alpha: Option<f64>,
    pub error_sq: Option<f64>,
    pub loss: Option<f64>,
    pub accuracy: Option<f64>,
    pub cumulative_energy: f64,
    pub cumulative_consumed: f64,
    pub mean_tau: Option<f64>,
}

/// Reads `summary.csv` from a run directory.
pub fn read_summary(dir: &Path) -> Result<Vec<SummaryRow>> {
    let path: PathBuf = dir.join(SUMMARY_FILE);
    let fail = |message: String| Error::Report {
        dir: dir.to_path_buf(),
        message,
    };
    let mut rdr =
        csv::Reader::from_path(&path).map_err(|e| fail(format!("{}: {e}", path.display())))?;
    let header = rdr.headers().map_err(|e| fail(e.to_string()))?.clone();
    if header.iter().ne(SUMMARY_HEADER) {
        return Err(fail(format!(
            "unexpected summary header {:?}",
            header.iter().collect::<Vec<_>>()
        )));
    }
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| fail(e.to_string()))?;
        let bad = |col: &str| fail(format!("row {}: bad `{col}`", line + 2));
        let num = |i: usize| -> std::result::Result<Option<f64>, ()> {
            match &rec[i] {
                "" => Ok(None),
                s => s.parse().map(Some).map_err(|_| ()),
            }
        };
        let req = |i: usize| num(i).ok().flatten().ok_or_else(|| bad(SUMMARY_HEADER[i]));
        let opt = |i: usize| num(i).map_err(|_| bad(SUMMARY_HEADER[i]));
        rows.push(SummaryRow {
            t: rec[0].parse().map_err(|_| bad("t"))?,
            n_active: rec[1].parse().map_err(|_| bad("N_t"))?,
            alpha: opt(2)?,
            error_sq: opt(3)?,
            loss: opt(4)?,
            accuracy: opt(5)?,
            cumulative_energy: req(6)?,
            cumulative_consumed: req(7)?,
            mean_tau: opt(8)?,
        });
    }
    Ok(rows)
}
