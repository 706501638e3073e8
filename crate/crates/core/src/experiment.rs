//! Parameter sweeps and cross-run comparison reports.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::{parse_value, SimConfig, KEYS};
use crate::output::{fmt_f64, read_summary, summary_row, write_run, SummaryRow, SUMMARY_HEADER};
use crate::sim::{run, RunOutput};
use crate::{Error, Result};

pub const SWEEP_FILE: &str = "sweep.csv";

/// Keys a sweep may vary. `workers` only changes scheduling, never results.
pub fn sweepable_fields() -> Vec<&'static str> {
    KEYS.iter().copied().filter(|k| *k != "workers").collect()
}

/// Turns a value into a directory-safe name.
pub fn value_slug(axis: &str, value: &str) -> String {
    let v: String = value
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{axis}={v}")
}

/// One run per value of `axis`, all sharing the base seed. With `out`, each
/// run is written to `out/<axis>=<value>/` and a merged `sweep.csv` is added.
pub fn sweep(
    base: &SimConfig,
    axis: &str,
    values: &[String],
    out: Option<&Path>,
) -> Result<Vec<(String, RunOutput)>> {
    if !sweepable_fields().contains(&axis) {
        return Err(Error::config(
            axis,
            format!(
                "not a sweepable field; choose one of: {}",
                sweepable_fields().join(", ")
            ),
        ));
    }
    if values.is_empty() {
        return Err(Error::config(axis, "sweep needs at least one value"));
    }
    let mut runs = Vec::with_capacity(values.len());
    for value in values {
        let mut cfg = base.clone();
        cfg.set(axis, &parse_value(value))?;
        cfg.validate()?;
        let result = run(&cfg)?;
        if let Some(dir) = out {
            write_run(&result, &dir.join(value_slug(axis, value)))?;
        }
        runs.push((value.clone(), result));
    }
    if let Some(dir) = out {
        let path = dir.join(SWEEP_FILE);
        let report_err = |e: csv::Error| Error::Report {
            dir: dir.to_path_buf(),
            message: e.to_string(),
        };
        let mut w = csv::Writer::from_path(&path).map_err(report_err)?;
        let mut header = vec![axis];
        header.extend(SUMMARY_HEADER);
        w.write_record(&header).map_err(report_err)?;
        for (value, r) in &runs {
            for rec in &r.records {
                let row = summary_row(rec);
                w.write_record(
                    std::iter::once(value.as_str()).chain(row.iter().map(String::as_str)),
                )
                .map_err(report_err)?;
            }
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    Ok(runs)
}

/// Per-run figures used by the comparison tables.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub name: String,
    pub rows: Vec<SummaryRow>,
    pub final_accuracy: Option<f64>,
    pub mean_participation: f64,
    pub total_energy: f64,
    /// First `(round, cumulative energy)` with accuracy at or above target.
    pub target_hit: Option<(usize, f64)>,
}

impl RunSummary {
    pub fn from_rows(name: String, rows: Vec<SummaryRow>, target: Option<f64>) -> Self {
        let final_accuracy = rows.iter().rev().find_map(|r| r.accuracy);
        let mean_participation = if rows.is_empty() {
            0.0
        } else {
            rows.iter().map(|r| r.n_active as f64).sum::<f64>() / rows.len() as f64
        };
        let total_energy = rows.last().map_or(0.0, |r| r.cumulative_energy);
        let target_hit = target.and_then(|target| {
            rows.iter()
                .find(|r| r.accuracy.is_some_and(|a| a >= target))
                .map(|r| (r.t, r.cumulative_energy))
        });
        Self {
            name,
            rows,
            final_accuracy,
            mean_participation,
            total_energy,
            target_hit,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub runs: Vec<RunSummary>,
    /// Rounds shown in the aligned table (the shortest run's length).
    pub aligned_rounds: usize,
    pub warnings: Vec<String>,
    pub target: Option<f64>,
}

/// Loads the summaries of `dirs` and aligns them by round.
pub fn report(dirs: &[PathBuf], target: Option<f64>) -> Result<Report> {
    if dirs.is_empty() {
        return Err(Error::config("report", "no run directories given"));
    }
    let mut runs = Vec::with_capacity(dirs.len());
    for dir in dirs {
        let rows = read_summary(dir)?;
        let name = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| dir.display().to_string());
        runs.push(RunSummary::from_rows(name, rows, target));
    }
    let lens: Vec<usize> = runs.iter().map(|r| r.rows.len()).collect();
    let aligned_rounds = lens.iter().copied().min().unwrap_or(0);
    let mut warnings = Vec::new();
    if lens.iter().any(|&l| l != aligned_rounds) {
        warnings.push(format!(
            "runs have different lengths ({lens:?}); per-round table truncated to {aligned_rounds} rounds"
        ));
    }
    Ok(Report {
        runs,
        aligned_rounds,
        warnings,
        target,
    })
}

fn show(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.digits$}"))
}

impl Report {
    /// Aligned plain-text tables.
    pub fn render_text(&self) -> String {
        let mut s = String::new();
        for w in &self.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        let width = self
            .runs
            .iter()
            .map(|r| r.name.len())
            .max()
            .unwrap_or(3)
            .max(8);
        let _ = writeln!(
            s,
            "{:<width$}  {:>9}  {:>9}  {:>14}",
            "run", "final_acc", "mean_N_t", "energy_J"
        );
        for r in &self.runs {
            let _ = writeln!(
                s,
                "{:<width$}  {:>9}  {:>9.3}  {:>14.6e}",
                r.name,
                show(r.final_accuracy, 4),
                r.mean_participation,
                r.total_energy
            );
        }
        if let Some(target) = self.target {
            let _ = writeln!(s, "\naccuracy target {target}");
            let _ = writeln!(s, "{:<width$}  {:>9}  {:>14}", "run", "round", "energy_J");
            for r in &self.runs {
                match r.target_hit {
                    Some((t, e)) => {
                        let _ = writeln!(s, "{:<width$}  {:>9}  {:>14.6e}", r.name, t, e);
                    }
                    None => {
                        let _ = writeln!(
                            s,
                            "{:<width$}  {:>9}  {:>14}",
                            r.name, "not reached", "not reached"
                        );
                    }
                }
            }
        }
        let _ = writeln!(s, "\nper-round accuracy / N_t / cumulative energy");
        let _ = write!(s, "{:>5}", "t");
        for r in &self.runs {
            let _ = write!(s, "  {:>30}", r.name);
        }
        s.push('\n');
        for i in 0..self.aligned_rounds {
            let _ = write!(s, "{:>5}", self.runs[0].rows[i].t);
            for r in &self.runs {
                let row = &r.rows[i];
                let cellv = format!(
                    "{} {:>3} {:.3e}",
                    show(row.accuracy, 4),
                    row.n_active,
                    row.cumulative_energy
                );
                let _ = write!(s, "  {cellv:>30}");
            }
            s.push('\n');
        }
        s
    }

    /// Long-format CSV of the aligned rounds plus the target table.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let report_err = |e: csv::Error| Error::Report {
            dir: path.to_path_buf(),
            message: e.to_string(),
        };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let mut w = csv::Writer::from_path(path).map_err(report_err)?;
        w.write_record([
            "run",
            "t",
            "N_t",
            "accuracy",
            "cumulative_energy",
            "target_round",
            "target_energy",
        ])
        .map_err(report_err)?;
        for r in &self.runs {
            let (tr, te) = match (self.target, r.target_hit) {
                (None, _) => (String::new(), String::new()),
                (Some(_), Some((t, e))) => (t.to_string(), fmt_f64(e)),
                (Some(_), None) => ("not reached".to_string(), "not reached".to_string()),
            };
            for row in &r.rows[..self.aligned_rounds] {
                w.write_record([
                    r.name.clone(),
                    row.t.to_string(),
                    row.n_active.to_string(),
                    row.accuracy.map(fmt_f64).unwrap_or_default(),
                    fmt_f64(row.cumulative_energy),
                    tr.clone(),
                    te.clone(),
                ])
                .map_err(report_err)?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(t: usize, acc: Option<f64>, e: f64) -> SummaryRow {
        SummaryRow {
            t,
            n_active: 2,
            alpha: None,
            error_sq: None,
            loss: None,
            accuracy: acc,
            cumulative_energy: e,
            cumulative_consumed: e,
            mean_tau: None,
        }
    }

    #[test]
    fn target_hit_and_miss() {
        let rows = vec![
            row(1, Some(0.3), 1.0),
            row(2, Some(0.8), 2.0),
            row(3, Some(0.9), 3.0),
        ];
        let hit = RunSummary::from_rows("a".into(), rows.clone(), Some(0.75));
        assert_eq!(hit.target_hit, Some((2, 2.0)));
        assert_eq!(hit.final_accuracy, Some(0.9));
        let miss = RunSummary::from_rows("b".into(), rows, Some(0.95));
        assert_eq!(miss.target_hit, None);
        let rep = Report {
            runs: vec![hit, miss],
            aligned_rounds: 3,
            warnings: vec![],
            target: Some(0.95),
        };
        assert!(rep.render_text().contains("not reached"));
    }

    #[test]
    fn invalid_axis_lists_fields() {
        let err = sweep(&SimConfig::default(), "bogus", &["1".into()], None)
            .unwrap_err()
            .to_string();
        assert!(
            err.contains("sweepable") && err.contains("P_in") && err.contains("denoise"),
            "{err}"
        );
    }

    #[test]
    fn slugs_are_path_safe() {
        assert_eq!(value_slug("P_in", "0.1 W"), "P_in=0.1_W");
        assert_eq!(value_slug("P_in", "-80 dBm"), "P_in=-80_dBm");
    }
}
