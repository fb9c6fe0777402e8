//! Verification reports: one JSON object per check, plus a CSV summary.
//!
//! Rows carry no timestamps, so identical runs produce identical bytes.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::error::Result;

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub suite: String,
    pub check: String,
    /// Name of the statement the check exercises.
    pub anchor: String,
    pub params: BTreeMap<String, Value>,
    pub estimate: f64,
    pub std_error: Option<f64>,
    pub tolerance: f64,
    pub sup_point: Option<String>,
    pub pass: bool,
}

impl ReportRow {
    pub fn new(suite: &str, check: &str, anchor: &str, estimate: f64, tolerance: f64, pass: bool) -> Self {
        ReportRow {
            suite: suite.to_string(),
            check: check.to_string(),
            anchor: anchor.to_string(),
            params: BTreeMap::new(),
            estimate,
            std_error: None,
            tolerance,
            sup_point: None,
            pass,
        }
    }

    pub fn param(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }

    pub fn std_error(mut self, se: f64) -> Self {
        self.std_error = Some(se);
        self
    }

    pub fn sup_point(mut self, point: impl ToString) -> Self {
        self.sup_point = Some(point.to_string());
        self
    }

    /// `suite/check`, used when listing failures.
    pub fn name(&self) -> String {
        format!("{}/{}", self.suite, self.check)
    }
}

/// Serialize rows as JSON lines.
pub fn to_jsonl(rows: &[ReportRow]) -> Result<String> {
    let mut out = String::new();
    for row in rows {
        out.push_str(&serde_json::to_string(row)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_jsonl(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(to_jsonl(rows)?.as_bytes())?;
    w.flush()?;
    Ok(())
}

/// CSV with columns `suite, check, estimate, tolerance, pass`.
pub fn write_summary_csv(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["suite", "check", "estimate", "tolerance", "pass"])?;
    for row in rows {
        w.write_record([
            row.suite.as_str(),
            row.check.as_str(),
            &row.estimate.to_string(),
            &row.tolerance.to_string(),
            if row.pass { "true" } else { "false" },
        ])?;
    }
    w.flush()?;
    Ok(())
}
