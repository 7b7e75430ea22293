//! Report emission: CSV and markdown tables with a fixed column order and
//! 4-decimal floats, so identical inputs always produce identical bytes.

use std::path::Path;

use super::{AnalysisError, ConsistencyReport, CorrelationResult, SweepResult};
use crate::corpus::atomic_write;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    MarkdownTable,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::MarkdownTable => "md",
        }
    }
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Self::Csv),
            "markdown-table" | "markdown" | "md" => Ok(Self::MarkdownTable),
            other => Err(format!(
                "unknown format \"{other}\" (expected csv or markdown-table)"
            )),
        }
    }
}

fn fmt_score(value: f64) -> String {
    format!("{value:.4}")
}

/// RFC 4180 quoting, applied only when needed so plain fields stay plain.
fn csv_field(value: &str) -> String {
    if value.contains(',') || value.contains('"') || value.contains('\n') {
        format!("\"{}\"", value.replace('"', "\"\""))
    } else {
        value.to_string()
    }
}

fn render_table(
    format: ReportFormat,
    header: &[&str],
    rows: &[Vec<String>],
) -> String {
    let mut out = String::new();
    match format {
        ReportFormat::Csv => {
            out.push_str(&header.join(","));
            out.push('\n');
            for row in rows {
                let rendered: Vec<String> = row.iter().map(|f| csv_field(f)).collect();
                out.push_str(&rendered.join(","));
                out.push('\n');
            }
        }
        ReportFormat::MarkdownTable => {
            out.push_str("| ");
            out.push_str(&header.join(" | "));
            out.push_str(" |\n|");
            for _ in header {
                out.push_str(" --- |");
            }
            out.push('\n');
            for row in rows {
                out.push_str("| ");
                out.push_str(&row.join(" | "));
                out.push_str(" |\n");
            }
        }
    }
    out
}

fn write(path: &Path, contents: &str) -> Result<(), AnalysisError> {
    atomic_write(path, contents).map_err(|e| AnalysisError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Per-question score rows.
pub fn emit_report_rows(
    report: &ConsistencyReport,
    path: &Path,
    format: ReportFormat,
) -> Result<(), AnalysisError> {
    if report.rows.is_empty() {
        return Err(AnalysisError::EmptyReport);
    }
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.model_id.clone(),
                r.target.label().to_string(),
                r.metric.label().to_string(),
                r.question_id.clone(),
                fmt_score(r.score),
            ]
        })
        .collect();
    write(
        path,
        &render_table(
            format,
            &["model", "target", "metric", "question_id", "score"],
            &rows,
        ),
    )
}

/// Mean scores per (model, target, metric) cell.
pub fn emit_report_aggregates(
    report: &ConsistencyReport,
    path: &Path,
    format: ReportFormat,
) -> Result<(), AnalysisError> {
    if report.aggregates.is_empty() {
        return Err(AnalysisError::EmptyReport);
    }
    let rows: Vec<Vec<String>> = report
        .aggregates
        .iter()
        .map(|a| {
            vec![
                a.model_id.clone(),
                a.target.label().to_string(),
                a.metric.label().to_string(),
                fmt_score(a.mean),
                a.question_count.to_string(),
            ]
        })
        .collect();
    write(
        path,
        &render_table(
            format,
            &["model", "target", "metric", "mean", "questions"],
            &rows,
        ),
    )
}

pub fn emit_sweep(
    sweep: &SweepResult,
    path: &Path,
    format: ReportFormat,
) -> Result<(), AnalysisError> {
    if sweep.rows.is_empty() {
        return Err(AnalysisError::EmptyReport);
    }
    let rows: Vec<Vec<String>> = sweep
        .rows
        .iter()
        .map(|r| {
            vec![
                sweep.mode.label().to_string(),
                fmt_score(r.temperature),
                r.metric.label().to_string(),
                fmt_score(r.mean),
                r.question_count.to_string(),
            ]
        })
        .collect();
    write(
        path,
        &render_table(
            format,
            &["mode", "temperature", "metric", "mean", "questions"],
            &rows,
        ),
    )
}

pub fn emit_correlations(
    correlations: &[CorrelationResult],
    path: &Path,
    format: ReportFormat,
) -> Result<(), AnalysisError> {
    if correlations.is_empty() {
        return Err(AnalysisError::EmptyReport);
    }
    let rows: Vec<Vec<String>> = correlations
        .iter()
        .map(|c| {
            vec![
                c.model_id.clone(),
                c.target.label().to_string(),
                c.metric.label().to_string(),
                c.aggregation.label().to_string(),
                fmt_score(c.pearson_r),
                c.question_count.to_string(),
            ]
        })
        .collect();
    write(
        path,
        &render_table(
            format,
            &["model", "target", "metric", "aggregation", "pearson_r", "questions"],
            &rows,
        ),
    )
}
