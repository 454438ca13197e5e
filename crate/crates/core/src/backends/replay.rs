use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

use super::{is_sha256_hex, TraceRecord};
use crate::trace::TraceError;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("I/O error on trace file: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: field `{field}`: {message}")]
    InvariantViolation {
        line: usize,
        field: String,
        message: String,
    },
}

/// Parses trace JSONL, validating every record. Blank lines are skipped.
pub fn parse_replay(text: &str) -> Result<Vec<TraceRecord>, ReplayError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = i + 1;
        let record: TraceRecord = serde_json::from_str(line).map_err(|e| ReplayError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        validate(&record, line_no)?;
        out.push(record);
    }
    Ok(out)
}

fn validate(r: &TraceRecord, line: usize) -> Result<(), ReplayError> {
    let violation = |field: String, message: String| ReplayError::InvariantViolation {
        line,
        field,
        message,
    };
    if !is_sha256_hex(&r.text_hash) {
        return Err(violation(
            "text_hash".into(),
            "expected 64 lowercase hex digits".into(),
        ));
    }
    if r.model_id.is_empty() {
        return Err(violation("model_id".into(), "must be nonempty".into()));
    }
    r.trace.validate().map_err(|e| match e {
        TraceError::EmptyTrace => violation("steps".into(), e.to_string()),
        TraceError::InvalidLogprob { index, .. } => {
            violation(format!("steps[{index}].lp"), e.to_string())
        }
        TraceError::InvalidRank { index } => violation(format!("steps[{index}].r"), e.to_string()),
        other => violation("steps".into(), other.to_string()),
    })
}

pub fn replay_load(path: impl AsRef<Path>) -> Result<Vec<TraceRecord>, ReplayError> {
    parse_replay(&fs::read_to_string(path)?)
}

/// Canonical JSONL rendering: fixed key order, shortest round-trip floats.
pub fn to_jsonl(records: &[TraceRecord]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(r).expect("trace records serialize") + "\n")
        .collect()
}

/// Writes records atomically (temp file in the target directory, then rename).
pub fn replay_save(path: impl AsRef<Path>, records: &[TraceRecord]) -> Result<(), ReplayError> {
    let path = path.as_ref();
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(to_jsonl(records).as_bytes())?;
    tmp.persist(path).map_err(|e| ReplayError::Io(e.error))?;
    Ok(())
}
