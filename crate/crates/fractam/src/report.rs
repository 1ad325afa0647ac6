//! Report table serialization and multi-model merging.
//!
//! The report file is a UTF-8 tab-separated table: a header row, then one
//! row per model with the eight metric columns as percentages rendered to
//! two decimal places.

use std::path::Path;

use crate::metrics::{EvaluationReport, ReportColumns, REPORT_COLUMNS};

/// One parsed table row.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub model_id: String,
    pub columns: ReportColumns,
}

impl From<&EvaluationReport> for ReportRow {
    fn from(report: &EvaluationReport) -> Self {
        Self {
            model_id: report.model_id.clone(),
            columns: report.columns,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("report line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate model id `{0}`")]
    DuplicateModel(String),
    #[error("no report rows to merge")]
    Empty,
}

/// Renders rows as the tab-separated table, two decimals per value.
pub fn render_table(rows: &[ReportRow]) -> String {
    let mut out = String::from("model");
    for column in REPORT_COLUMNS {
        out.push('\t');
        out.push_str(column);
    }
    out.push('\n');
    for row in rows {
        out.push_str(&row.model_id);
        for value in row.columns.as_array() {
            out.push_str(&format!("\t{value:.2}"));
        }
        out.push('\n');
    }
    out
}

/// Parses a rendered table back into rows.
pub fn parse_table(text: &str) -> Result<Vec<ReportRow>, ReportError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(ReportError::Empty)?;
    let expected_header = {
        let mut h = String::from("model");
        for column in REPORT_COLUMNS {
            h.push('\t');
            h.push_str(column);
        }
        h
    };
    if header != expected_header {
        return Err(ReportError::Parse {
            line: 1,
            message: format!("bad header `{header}`"),
        });
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split('\t').collect();
        if cells.len() != REPORT_COLUMNS.len() + 1 {
            return Err(ReportError::Parse {
                line: idx + 1,
                message: format!(
                    "expected {} cells, got {}",
                    REPORT_COLUMNS.len() + 1,
                    cells.len()
                ),
            });
        }
        let mut values = [0.0f64; 8];
        for (i, cell) in cells[1..].iter().enumerate() {
            values[i] = cell.parse().map_err(|_| ReportError::Parse {
                line: idx + 1,
                message: format!("`{cell}` is not a number"),
            })?;
            if !values[i].is_finite() || !(0.0..=100.0).contains(&values[i]) {
                return Err(ReportError::Parse {
                    line: idx + 1,
                    message: format!("value {} outside [0, 100]", values[i]),
                });
            }
        }
        rows.push(ReportRow {
            model_id: cells[0].to_string(),
            columns: ReportColumns {
                esa: values[0],
                eis: values[1],
                sa: values[2],
                ija: values[3],
                irs: values[4],
                lda: values[5],
                lrs: values[6],
                his: values[7],
            },
        });
    }
    Ok(rows)
}

/// Merges per-model report files into one comparison table. Duplicate model
/// ids and empty input are errors.
pub fn merge_report_files(paths: &[impl AsRef<Path>]) -> Result<Vec<ReportRow>, ReportError> {
    let mut rows: Vec<ReportRow> = Vec::new();
    for path in paths {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ReportError::Read {
            path: path.display().to_string(),
            source,
        })?;
        for row in parse_table(&text)? {
            if rows
                .iter()
                .any(|existing| existing.model_id == row.model_id)
            {
                return Err(ReportError::DuplicateModel(row.model_id));
            }
            rows.push(row);
        }
    }
    if rows.is_empty() {
        return Err(ReportError::Empty);
    }
    Ok(rows)
}
