//! CSV schema for experiment logs: fixed column order, 17-significant-digit
//! floats (round-trip exact), UTF-8, LF line endings, `.` decimal separator.

use crate::error::{Error, Result};
use crate::solvers::{IterateLog, RunState};

pub const CSV_HEADER: &str =
    "run_id,method,t,F_value,x_rel_err,F_rel_err,k_bar,grad_norm_x,grad_norm_z,residual,wall_millis";

#[derive(Clone, Debug, PartialEq)]
pub struct CsvRow {
    pub run_id: usize,
    pub method: String,
    pub t: usize,
    pub f_value: f64,
    pub x_rel_err: Option<f64>,
    pub f_rel_err: Option<f64>,
    pub k_bar: usize,
    pub grad_norm_x: f64,
    pub grad_norm_z: f64,
    pub residual: f64,
    pub wall_millis: u64,
}

/// 17 significant digits: enough for exact f64 round-trips.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn format_optional(v: Option<f64>) -> String {
    // missing data renders as an empty field, never as zero
    v.map(format_float).unwrap_or_default()
}

impl CsvRow {
    pub fn from_log(run_id: usize, method: &str, log: &IterateLog, timing: bool) -> CsvRow {
        CsvRow {
            run_id,
            method: method.to_string(),
            t: log.t,
            f_value: log.upper_value,
            x_rel_err: log.x_rel_err,
            f_rel_err: log.upper_rel_err,
            k_bar: log.k_bar,
            grad_norm_x: log.grad_norm_x,
            grad_norm_z: log.grad_norm_z,
            residual: log.residual_at_selected,
            wall_millis: if timing { log.wall_millis } else { 0 },
        }
    }

    pub fn to_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.run_id,
            self.method,
            self.t,
            format_float(self.f_value),
            format_optional(self.x_rel_err),
            format_optional(self.f_rel_err),
            self.k_bar,
            format_float(self.grad_norm_x),
            format_float(self.grad_norm_z),
            format_float(self.residual),
            self.wall_millis,
        )
    }

    pub fn parse_line(line: &str) -> Result<CsvRow> {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 11 {
            return Err(Error::Config(format!(
                "csv row has {} fields, expected 11",
                fields.len()
            )));
        }
        let req = |i: usize| -> Result<f64> {
            fields[i]
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("csv field {i}: bad number '{}'", fields[i])))
        };
        let opt = |i: usize| -> Result<Option<f64>> {
            if fields[i].is_empty() {
                Ok(None)
            } else {
                req(i).map(Some)
            }
        };
        let int = |i: usize| -> Result<usize> {
            fields[i]
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("csv field {i}: bad integer '{}'", fields[i])))
        };
        Ok(CsvRow {
            run_id: int(0)?,
            method: fields[1].to_string(),
            t: int(2)?,
            f_value: req(3)?,
            x_rel_err: opt(4)?,
            f_rel_err: opt(5)?,
            k_bar: int(6)?,
            grad_norm_x: req(7)?,
            grad_norm_z: req(8)?,
            residual: req(9)?,
            wall_millis: fields[10]
                .parse::<u64>()
                .map_err(|_| Error::Config(format!("csv field 10: bad integer '{}'", fields[10])))?,
        })
    }
}

pub fn rows_from_run(run_id: usize, state: &RunState, timing: bool) -> Vec<CsvRow> {
    state
        .logs
        .iter()
        .map(|log| CsvRow::from_log(run_id, state.method.label(), log, timing))
        .collect()
}

pub fn render_csv(rows: &[CsvRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.to_line());
        out.push('\n');
    }
    out
}

pub fn write_csv(path: &str, rows: &[CsvRow]) -> Result<()> {
    std::fs::write(path, render_csv(rows))?;
    Ok(())
}

pub fn read_csv(path: &str) -> Result<Vec<CsvRow>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header == CSV_HEADER => {}
        _ => {
            return Err(Error::Config(format!(
                "{path}: header does not match the expected schema"
            )))
        }
    }
    lines.map(CsvRow::parse_line).collect()
}
