//! Metric-stream comparison between two scenario runs.

use std::fmt;
use std::path::Path;

use super::{FrameMetrics, ScenarioError, METRICS_HEADER};

/// Per-column absolute deltas over the aligned frames.
#[derive(Debug, Clone)]
pub struct ColumnDelta {
    pub column: &'static str,
    pub max_abs: f64,
    pub mean_abs: f64,
}

#[derive(Debug, Clone)]
pub struct CompareReport {
    pub frames_a: usize,
    pub frames_b: usize,
    /// Number of frame pairs compared (the shorter stream's length).
    pub compared: usize,
    pub columns: Vec<ColumnDelta>,
}

impl CompareReport {
    /// Largest delta of a column by name.
    pub fn max_delta(&self, column: &str) -> Option<f64> {
        self.columns
            .iter()
            .find(|c| c.column == column)
            .map(|c| c.max_abs)
    }
}

impl fmt::Display for CompareReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.frames_a != self.frames_b {
            writeln!(
                f,
                "frame count mismatch: {} vs {} (compared first {})",
                self.frames_a, self.frames_b, self.compared
            )?;
        } else {
            writeln!(f, "compared {} frames", self.compared)?;
        }
        writeln!(f, "{:<24} {:>14} {:>14}", "column", "max |delta|", "mean |delta|")?;
        for c in &self.columns {
            writeln!(f, "{:<24} {:>14.6e} {:>14.6e}", c.column, c.max_abs, c.mean_abs)?;
        }
        Ok(())
    }
}

/// Parses a metrics CSV produced by a scenario run.
pub fn parse_metrics_csv(path: impl AsRef<Path>) -> Result<Vec<FrameMetrics>, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| ScenarioError::Config {
        path: path.display().to_string(),
        line: 1,
        message: "empty metrics file".to_string(),
    })?;
    if header.trim() != METRICS_HEADER {
        return Err(ScenarioError::Config {
            path: path.display().to_string(),
            line: 1,
            message: "unexpected metrics header".to_string(),
        });
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let parse = |k: usize| -> Result<f64, ScenarioError> {
            fields
                .get(k)
                .and_then(|t| t.trim().parse::<f64>().ok())
                .ok_or_else(|| ScenarioError::Config {
                    path: path.display().to_string(),
                    line: i + 1,
                    message: format!("bad field {k}"),
                })
        };
        if fields.len() != 10 {
            return Err(ScenarioError::Config {
                path: path.display().to_string(),
                line: i + 1,
                message: format!("expected 10 fields, found {}", fields.len()),
            });
        }
        rows.push(FrameMetrics {
            frame: parse(0)? as u32,
            total_volume: parse(1)?,
            volume_error_pct: parse(2)?,
            elastic_energy: parse(3)?,
            kinetic_energy: parse(4)?,
            max_constraint_residual: parse(5)?,
            min_element_j: parse(6)?,
            newton_iters: parse(7)? as u32,
            outer_iters: parse(8)? as u32,
            wall_ms: parse(9)?,
        });
    }
    Ok(rows)
}

const COLUMNS: [&str; 10] = [
    "frame",
    "total_volume",
    "volume_error_pct",
    "elastic_energy",
    "kinetic_energy",
    "max_constraint_residual",
    "min_element_J",
    "newton_iters",
    "outer_iters",
    "wall_ms",
];

fn column_value(m: &FrameMetrics, k: usize) -> f64 {
    match k {
        0 => m.frame as f64,
        1 => m.total_volume,
        2 => m.volume_error_pct,
        3 => m.elastic_energy,
        4 => m.kinetic_energy,
        5 => m.max_constraint_residual,
        6 => m.min_element_j,
        7 => m.newton_iters as f64,
        8 => m.outer_iters as f64,
        _ => m.wall_ms,
    }
}

/// Aligns two metric streams frame by frame and reports per-column deltas.
/// A frame-count mismatch is reported in the result, not an error.
pub fn compare_runs(
    a: impl AsRef<Path>,
    b: impl AsRef<Path>,
) -> Result<CompareReport, ScenarioError> {
    let rows_a = parse_metrics_csv(a)?;
    let rows_b = parse_metrics_csv(b)?;
    let compared = rows_a.len().min(rows_b.len());
    let mut columns = Vec::with_capacity(COLUMNS.len());
    for (k, name) in COLUMNS.iter().enumerate() {
        let mut max_abs = 0.0f64;
        let mut sum = 0.0f64;
        for i in 0..compared {
            let d = (column_value(&rows_a[i], k) - column_value(&rows_b[i], k)).abs();
            max_abs = max_abs.max(d);
            sum += d;
        }
        columns.push(ColumnDelta {
            column: name,
            max_abs,
            mean_abs: if compared > 0 { sum / compared as f64 } else { 0.0 },
        });
    }
    Ok(CompareReport {
        frames_a: rows_a.len(),
        frames_b: rows_b.len(),
        compared,
        columns,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_rows() -> Vec<FrameMetrics> {
        (1..=3)
            .map(|f| FrameMetrics {
                frame: f,
                total_volume: 1.0 + f as f64 * 0.1,
                volume_error_pct: -0.5 * f as f64,
                elastic_energy: 2.0,
                kinetic_energy: 0.0,
                max_constraint_residual: 1e-9,
                min_element_j: 0.8,
                newton_iters: 5,
                outer_iters: 2,
                wall_ms: 12.0,
            })
            .collect()
    }

    #[test]
    fn identical_files_have_zero_deltas() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.csv");
        super::super::write_metrics_atomic(&path, &sample_rows()).unwrap();
        let report = compare_runs(&path, &path).unwrap();
        assert_eq!(report.compared, 3);
        for c in &report.columns {
            assert_eq!(c.max_abs, 0.0);
            assert_eq!(c.mean_abs, 0.0);
        }
    }

    #[test]
    fn mismatched_frame_counts_reported_not_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        super::super::write_metrics_atomic(&a, &sample_rows()).unwrap();
        super::super::write_metrics_atomic(&b, &sample_rows()[..2]).unwrap();
        let report = compare_runs(&a, &b).unwrap();
        assert_eq!(report.frames_a, 3);
        assert_eq!(report.frames_b, 2);
        assert_eq!(report.compared, 2);
    }

    #[test]
    fn round_trip_preserves_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.csv");
        let rows = sample_rows();
        super::super::write_metrics_atomic(&path, &rows).unwrap();
        let parsed = parse_metrics_csv(&path).unwrap();
        assert_eq!(parsed, rows);
    }
}
