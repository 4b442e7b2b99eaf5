//! Bug specifications: the buggy function, where it is wrong, and how to run
//! its tests.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::ProjectIndex;
use crate::harness::Harness;
use crate::prompting::{LanguageStyle, LineSpan};
use crate::testcase::OracleKind;

#[derive(Debug, Error)]
pub enum BugSpecError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: not a bug spec: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid bug spec: {}", .0.join("; "))]
    SpecInvalid(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FaultGranularity {
    Function,
    Hunk,
    Line,
}

fn default_line_comment() -> String {
    "//".into()
}

fn default_oracle() -> OracleKind {
    OracleKind::Exception
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct BugSpec {
    pub id: String,
    pub lang_label: String,
    pub buggy_source: String,
    pub buggy_name: String,
    pub fault_granularity: FaultGranularity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault_lines: Option<Vec<LineSpan>>,
    pub adapter_command: Vec<String>,
    pub test_ids: Vec<String>,
    #[serde(default)]
    pub project_index: ProjectIndex,
    #[serde(default = "default_oracle")]
    pub oracle_kind_default: OracleKind,
    #[serde(default = "default_line_comment")]
    pub line_comment: String,
    /// Directory the adapter runs in; the spec file's directory when loaded
    /// from disk.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl BugSpec {
    /// Field-level problems, empty when the spec is usable.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.id.trim().is_empty() {
            out.push("id: must not be empty".into());
        }
        if self.lang_label.trim().is_empty() {
            out.push("langLabel: must not be empty".into());
        }
        if self.buggy_name.trim().is_empty() {
            out.push("buggyName: must not be empty".into());
        } else if !self.buggy_source.contains(&self.buggy_name) {
            out.push(format!("buggyName: {:?} does not occur in buggySource", self.buggy_name));
        }
        let line_count = self.buggy_source.lines().count();
        match (&self.fault_granularity, &self.fault_lines) {
            (FaultGranularity::Function, Some(_)) => {
                out.push("faultLines: must be absent for function granularity".into())
            }
            (FaultGranularity::Function, None) => {}
            (_, None) => out.push("faultLines: required for line and hunk granularity".into()),
            (_, Some(spans)) if spans.is_empty() => {
                out.push("faultLines: must list at least one span".into())
            }
            (_, Some(spans)) => {
                for span in spans {
                    if span.0 == 0 || span.0 > span.1 || span.1 > line_count {
                        out.push(format!(
                            "faultLines: span [{}, {}] is outside lines 1..={line_count}",
                            span.0, span.1
                        ));
                    }
                }
            }
        }
        if self.adapter_command.is_empty() || self.adapter_command[0].is_empty() {
            out.push("adapterCommand: must not be empty".into());
        }
        if self.test_ids.is_empty() {
            out.push("testIds: must list at least one test".into());
        }
        out
    }

    pub fn validate(&self) -> Result<(), BugSpecError> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(BugSpecError::SpecInvalid(problems))
        }
    }

    pub fn style(&self) -> LanguageStyle {
        LanguageStyle::new(&self.lang_label, &self.line_comment)
    }

    pub fn harness(&self, timeout: Duration, workers: usize) -> Harness {
        Harness::new(self.adapter_command.clone(), &self.base_dir, self.test_ids.clone())
            .with_timeout(timeout)
            .with_workers(workers)
    }
}

pub fn parse_bug_spec(text: &str, base_dir: impl Into<PathBuf>) -> Result<BugSpec, BugSpecError> {
    let mut spec: BugSpec = serde_json::from_str(text).map_err(|e| BugSpecError::Parse {
        path: PathBuf::from("<inline>"),
        message: e.to_string(),
    })?;
    spec.base_dir = base_dir.into();
    spec.validate()?;
    Ok(spec)
}

pub fn load_bug_spec(path: impl AsRef<Path>) -> Result<BugSpec, BugSpecError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| BugSpecError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    parse_bug_spec(&text, base).map_err(|e| match e {
        BugSpecError::Parse { message, .. } => BugSpecError::Parse {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}
