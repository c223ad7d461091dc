//! Cross-run summaries over CSV logs: final errors, iterations to a
//! threshold, mean truncation index, and total wall time.

use std::collections::BTreeMap;

use super::csv::{format_float, read_csv, CsvRow};
use crate::error::Result;

#[derive(Clone, Debug)]
pub struct SummaryRow {
    pub run_id: usize,
    pub method: String,
    pub steps: usize,
    pub final_x_rel_err: Option<f64>,
    pub final_f_rel_err: Option<f64>,
    /// First t with x_rel_err below the threshold, when one exists.
    pub iters_to_threshold: Option<usize>,
    pub mean_k_bar: f64,
    pub total_wall_millis: u64,
}

#[derive(Clone, Debug)]
pub struct Summary {
    pub threshold: f64,
    pub rows: Vec<SummaryRow>,
}

pub fn summarize(paths: &[String], threshold: f64) -> Result<Summary> {
    let mut by_run: BTreeMap<(usize, String), Vec<CsvRow>> = BTreeMap::new();
    for path in paths {
        for row in read_csv(path)? {
            by_run
                .entry((row.run_id, row.method.clone()))
                .or_default()
                .push(row);
        }
    }

    let mut rows = Vec::new();
    for ((run_id, method), mut logs) in by_run {
        logs.sort_by_key(|r| r.t);
        let last = logs.last().expect("nonempty group");
        let iters_to_threshold = logs
            .iter()
            .find(|r| r.x_rel_err.is_some_and(|e| e < threshold))
            .map(|r| r.t);
        let mean_k_bar = logs.iter().map(|r| r.k_bar as f64).sum::<f64>() / logs.len() as f64;
        rows.push(SummaryRow {
            run_id,
            method,
            steps: logs.len(),
            final_x_rel_err: last.x_rel_err,
            final_f_rel_err: last.f_rel_err,
            iters_to_threshold,
            mean_k_bar,
            total_wall_millis: logs.iter().map(|r| r.wall_millis).max().unwrap_or(0),
        });
    }

    // methods that reach the threshold sooner come first; stragglers follow
    rows.sort_by(|a, b| {
        match (a.iters_to_threshold, b.iters_to_threshold) {
            (Some(x), Some(y)) => x.cmp(&y),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => std::cmp::Ordering::Equal,
        }
        .then(a.run_id.cmp(&b.run_id))
        .then(a.method.cmp(&b.method))
    });

    Ok(Summary { threshold, rows })
}

fn optional_cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3e}")).unwrap_or_default()
}

impl Summary {
    /// Aligned text table for terminals.
    pub fn render_table(&self) -> String {
        let header = [
            "run".to_string(),
            "method".to_string(),
            "steps".to_string(),
            "x_rel_err".to_string(),
            "F_rel_err".to_string(),
            format!("t<{}", self.threshold),
            "mean_k_bar".to_string(),
            "wall_ms".to_string(),
        ];
        let mut table: Vec<[String; 8]> = vec![header];
        for r in &self.rows {
            table.push([
                r.run_id.to_string(),
                r.method.clone(),
                r.steps.to_string(),
                optional_cell(r.final_x_rel_err),
                optional_cell(r.final_f_rel_err),
                r.iters_to_threshold
                    .map(|t| t.to_string())
                    .unwrap_or_default(),
                format!("{:.2}", r.mean_k_bar),
                r.total_wall_millis.to_string(),
            ]);
        }
        let mut widths = [0usize; 8];
        for row in &table {
            for (w, cell) in widths.iter_mut().zip(row.iter()) {
                *w = (*w).max(cell.len());
            }
        }
        let mut out = String::new();
        for row in &table {
            let line: Vec<String> = row
                .iter()
                .zip(widths.iter())
                .map(|(cell, w)| format!("{cell:>w$}"))
                .collect();
            out.push_str(&line.join("  "));
            out.push('\n');
        }
        out
    }

    /// Machine-readable companion to the text table.
    pub fn render_csv(&self) -> String {
        let mut out = String::from(
            "run_id,method,steps,final_x_rel_err,final_F_rel_err,iters_to_threshold,mean_k_bar,total_wall_millis\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.run_id,
                r.method,
                r.steps,
                r.final_x_rel_err.map(format_float).unwrap_or_default(),
                r.final_f_rel_err.map(format_float).unwrap_or_default(),
                r.iters_to_threshold
                    .map(|t| t.to_string())
                    .unwrap_or_default(),
                format_float(r.mean_k_bar),
                r.total_wall_millis,
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::csv::{render_csv, CsvRow};

    fn fake_row(run_id: usize, method: &str, t: usize, x_err: Option<f64>) -> CsvRow {
        CsvRow {
            run_id,
            method: method.into(),
            t,
            f_value: 0.0,
            x_rel_err: x_err,
            f_rel_err: None,
            k_bar: 7,
            grad_norm_x: 0.0,
            grad_norm_z: 0.0,
            residual: 0.0,
            wall_millis: 5,
        }
    }

    #[test]
    fn faster_method_sorts_first() {
        let rows = vec![
            fake_row(0, "slow", 0, Some(0.9)),
            fake_row(0, "slow", 1, Some(0.04)),
            fake_row(1, "fast", 0, Some(0.01)),
            fake_row(1, "fast", 1, Some(0.005)),
        ];
        let dir = std::env::temp_dir().join("bilevel-summary-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("a.csv");
        std::fs::write(&path, render_csv(&rows)).unwrap();
        let summary = summarize(&[path.to_str().unwrap().to_string()], 0.05).unwrap();
        assert_eq!(summary.rows[0].method, "fast");
        assert_eq!(summary.rows[0].iters_to_threshold, Some(0));
        assert_eq!(summary.rows[1].iters_to_threshold, Some(1));
    }

    #[test]
    fn missing_optimum_renders_empty_not_zero() {
        let rows = vec![fake_row(0, "rhg", 0, None)];
        let dir = std::env::temp_dir().join("bilevel-summary-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("b.csv");
        std::fs::write(&path, render_csv(&rows)).unwrap();
        let summary = summarize(&[path.to_str().unwrap().to_string()], 0.05).unwrap();
        assert_eq!(summary.rows[0].final_x_rel_err, None);
        let table = summary.render_table();
        assert!(!table.contains("NaN"));
        let csv = summary.render_csv();
        assert!(csv.lines().nth(1).unwrap().contains(",,"));
    }
}
