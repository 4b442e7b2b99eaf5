//! Per-bug report rows and their aggregation.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use walkdir::WalkDir;

pub const ROW_FILE: &str = "report.json";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no report rows found under {0}")]
    NoReports(PathBuf),
    #[error("{path}: {message}")]
    BadRow { path: PathBuf, message: String },
    #[error("cannot scan {path}: {message}")]
    Io { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowStatus {
    Plausible,
    Exhausted,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ReportRow {
    pub id: String,
    pub status: RowStatus,
    pub query_count: u64,
    pub plausible_count: usize,
    pub wall_seconds: f64,
    /// Filled in by a human reviewer, never by the tool.
    #[serde(default)]
    pub correct: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Aggregate {
    pub bugs: usize,
    pub plausible_bugs: usize,
    pub avg_query: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub rows: Vec<ReportRow>,
    pub aggregate: Aggregate,
}

impl RunReport {
    pub fn from_rows(mut rows: Vec<ReportRow>) -> Self {
        rows.sort_by(|a, b| a.id.cmp(&b.id));
        let bugs = rows.len();
        let plausible_bugs = rows
            .iter()
            .filter(|r| r.status == RowStatus::Plausible)
            .count();
        let total: u64 = rows.iter().map(|r| r.query_count).sum();
        let avg_query = if bugs == 0 { 0.0 } else { total as f64 / bugs as f64 };
        RunReport {
            rows,
            aggregate: Aggregate {
                bugs,
                plausible_bugs,
                avg_query,
            },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_table(&self) -> String {
        let width = self.rows.iter().map(|r| r.id.len()).max().unwrap_or(2).max(2);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}  {:<9}  {:>6}  {:>10}  {:>8}  {:>8}",
            "id", "status", "#Query", "#Plausible", "#Correct", "seconds"
        );
        for r in &self.rows {
            let status = match r.status {
                RowStatus::Plausible => "plausible",
                RowStatus::Exhausted => "exhausted",
                RowStatus::Error => "error",
            };
            let correct = match r.correct {
                Some(true) => "yes",
                Some(false) => "no",
                None => "",
            };
            let _ = writeln!(
                out,
                "{:<width$}  {:<9}  {:>6}  {:>10}  {:>8}  {:>8.1}",
                r.id, status, r.query_count, r.plausible_count, correct, r.wall_seconds
            );
        }
        let _ = writeln!(
            out,
            "bugs: {}  plausible: {}  avgQuery: {:.2}",
            self.aggregate.bugs, self.aggregate.plausible_bugs, self.aggregate.avg_query
        );
        out
    }
}

/// Reads every `report.json` below `dir`.
pub fn load_rows(dir: &Path) -> Result<Vec<ReportRow>, ReportError> {
    let mut rows = Vec::new();
    for entry in WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(|e| ReportError::Io {
            path: dir.to_path_buf(),
            message: e.to_string(),
        })?;
        if !entry.file_type().is_file() || entry.file_name() != ROW_FILE {
            continue;
        }
        let path = entry.path();
        let bad = |message: String| ReportError::BadRow {
            path: path.to_path_buf(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| bad(e.to_string()))?;
        rows.push(serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?);
    }
    if rows.is_empty() {
        return Err(ReportError::NoReports(dir.to_path_buf()));
    }
    Ok(rows)
}
