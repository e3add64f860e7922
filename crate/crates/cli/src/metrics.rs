//! Metrics CSV files and the multi-seed mean trajectory.

use std::path::Path;

use asyncadmm_core::{fit_loglog, MetricRecord, RateFit, RunMetrics};

use crate::error::{CliError, Result};

pub const COLUMNS: [&str; 8] = [
    "iter",
    "objective",
    "objective_error",
    "feasibility_violation",
    "ergodic_objective_error",
    "ergodic_feasibility",
    "lyapunov",
    "active_block",
];

/// One CSV row. `None` is written as an empty cell.
#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub iter: u64,
    pub objective: f64,
    pub objective_error: Option<f64>,
    pub feasibility_violation: f64,
    pub ergodic_objective_error: Option<f64>,
    pub ergodic_feasibility: Option<f64>,
    pub lyapunov: Option<f64>,
    pub active_block: Option<usize>,
}

impl From<&MetricRecord> for Row {
    fn from(r: &MetricRecord) -> Self {
        Row {
            iter: r.iter,
            objective: r.objective,
            objective_error: r.objective_error,
            feasibility_violation: r.feasibility_violation,
            ergodic_objective_error: r.ergodic_objective_error,
            ergodic_feasibility: r.ergodic_feasibility,
            lyapunov: r.lyapunov,
            active_block: Some(r.active_block),
        }
    }
}

impl Row {
    /// Value of a numeric column by name.
    pub fn get(&self, column: &str) -> Option<f64> {
        match column {
            "iter" => Some(self.iter as f64),
            "objective" => Some(self.objective),
            "objective_error" => self.objective_error,
            "feasibility_violation" => Some(self.feasibility_violation),
            "ergodic_objective_error" => self.ergodic_objective_error,
            "ergodic_feasibility" => self.ergodic_feasibility,
            "lyapunov" => self.lyapunov,
            "active_block" => self.active_block.map(|b| b as f64),
            _ => None,
        }
    }

    fn cells(&self) -> [String; 8] {
        let f = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        [
            self.iter.to_string(),
            self.objective.to_string(),
            f(self.objective_error),
            self.feasibility_violation.to_string(),
            f(self.ergodic_objective_error),
            f(self.ergodic_feasibility),
            f(self.lyapunov),
            self.active_block.map(|b| b.to_string()).unwrap_or_default(),
        ]
    }
}

/// Averages the trajectories of several seeds, summing in the given order.
///
/// Per-seed quantities (`objective`, `objective_error`,
/// `feasibility_violation`, `lyapunov`) are plain sample means. The ergodic
/// columns take the expectation inside the norm: `ergodic_feasibility` is
/// `||mean(D xbar + H zbar)||` and `ergodic_objective_error` is
/// `|mean F(xbar) - F*|`. `active_block` is left empty.
pub fn mean_rows(runs: &[RunMetrics], optimum: Option<f64>) -> Vec<Row> {
    let Some(first) = runs.first() else {
        return Vec::new();
    };
    let count = runs.len() as f64;
    let mean_opt = |get: &dyn Fn(&MetricRecord) -> Option<f64>, k: usize| -> Option<f64> {
        let mut acc = 0.0;
        for r in runs {
            acc += get(&r.records[k])?;
        }
        Some(acc / count)
    };
    (0..first.records.len())
        .map(|k| {
            let ergodic_feasibility = first.records[k].ergodic_residual.as_ref().map(|r0| {
                let mut acc = vec![0.0; r0.len()];
                for r in runs {
                    let res = r.records[k].ergodic_residual.as_ref().expect("same probes");
                    for (a, v) in acc.iter_mut().zip(res) {
                        *a += v;
                    }
                }
                acc.iter().map(|a| (a / count) * (a / count)).sum::<f64>().sqrt()
            });
            let ergodic_objective = mean_opt(&|m| m.ergodic_objective, k);
            Row {
                iter: first.records[k].iter,
                objective: mean_opt(&|m| Some(m.objective), k).unwrap_or(f64::NAN),
                objective_error: mean_opt(&|m| m.objective_error, k),
                feasibility_violation: mean_opt(&|m| Some(m.feasibility_violation), k)
                    .unwrap_or(f64::NAN),
                ergodic_objective_error: match (ergodic_objective, optimum) {
                    (Some(v), Some(f)) => Some((v - f).abs()),
                    _ => None,
                },
                ergodic_feasibility,
                lyapunov: mean_opt(&|m| m.lyapunov, k),
                active_block: None,
            }
        })
        .collect()
}

pub fn write_rows(path: &Path, rows: &[Row]) -> Result<()> {
    let csv_err = |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(COLUMNS).map_err(csv_err)?;
    for r in rows {
        w.write_record(r.cells()).map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Reads `(iter, value)` pairs of `column` from a metrics CSV; empty cells
/// come back as `None`.
pub fn read_column(path: &Path, column: &str) -> Result<Vec<(u64, Option<f64>)>> {
    let csv_err = |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err)?;
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let find = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            CliError::Validation(format!(
                "{} has no column `{name}` (columns: {})",
                path.display(),
                headers.iter().collect::<Vec<_>>().join(", ")
            ))
        })
    };
    let it = find("iter")?;
    let col = find(column)?;
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let bad = |what: &str| CliError::Parse {
            file: path.display().to_string(),
            line: Some(k + 2),
            message: format!("`{what}` is not a number"),
        };
        let iter = rec[it].parse::<u64>().map_err(|_| bad(&rec[it]))?;
        let cell = rec[col].trim();
        let value = if cell.is_empty() {
            None
        } else {
            Some(cell.parse::<f64>().map_err(|_| bad(cell))?)
        };
        out.push((iter, value));
    }
    Ok(out)
}

/// Log-log fit of the points with `from <= iter <= to` and a positive
/// value. `None` when fewer than two such points exist.
pub fn fit_window(points: &[(u64, Option<f64>)], from: u64, to: u64) -> Option<RateFit> {
    let (t, y): (Vec<f64>, Vec<f64>) = points
        .iter()
        .filter(|(k, v)| *k >= from && *k <= to && v.is_some_and(|v| v > 0.0 && v.is_finite()))
        .map(|(k, v)| (*k as f64, v.unwrap()))
        .unzip();
    if t.len() < 2 {
        return None;
    }
    fit_loglog(&t, &y).ok()
}
