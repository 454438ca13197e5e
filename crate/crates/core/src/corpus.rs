//! Human/machine text collections.
//!
//! A corpus is JSONL, one [`CorpusRecord`] per line. Machine texts and
//! their attacked variants point back at the human text they were derived
//! from through `pair_id`. Texts are kept byte-for-byte; nothing is trimmed
//! or normalized.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Human,
    Machine,
}

/// Adversarial variant of a machine text.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Attack {
    #[default]
    None,
    Paraphrase,
    Substitution,
}

impl Attack {
    pub fn as_str(self) -> &'static str {
        match self {
            Attack::None => "none",
            Attack::Paraphrase => "paraphrase",
            Attack::Substitution => "substitution",
        }
    }
}

impl FromStr for Attack {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Attack::None),
            "paraphrase" => Ok(Attack::Paraphrase),
            "substitution" => Ok(Attack::Substitution),
            other => Err(format!(
                "unknown attack {other:?} (expected none, paraphrase or substitution)"
            )),
        }
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("I/O error reading corpus: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: field `{field}`: {message}")]
    SchemaViolation {
        line: usize,
        field: &'static str,
        message: String,
    },
    #[error("pair_id {0:?} does not resolve to exactly one human record in its dataset")]
    DanglingPair(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusRecord {
    pub id: String,
    pub pair_id: String,
    pub label: Label,
    pub source_model: Option<String>,
    pub domain: String,
    pub dataset: String,
    pub attack: Attack,
    pub text: String,
}

impl CorpusRecord {
    fn check(&self, line: usize) -> Result<(), CorpusError> {
        let violation = |field, message: &str| CorpusError::SchemaViolation {
            line,
            field,
            message: message.to_string(),
        };
        if self.id.is_empty() {
            return Err(violation("id", "must be nonempty"));
        }
        if self.pair_id.is_empty() {
            return Err(violation("pair_id", "must be nonempty"));
        }
        if self.text.is_empty() {
            return Err(violation("text", "must be nonempty"));
        }
        match self.label {
            Label::Human => {
                if self.source_model.is_some() {
                    return Err(violation("source_model", "must be null for human records"));
                }
                if self.attack != Attack::None {
                    return Err(violation("attack", "must be \"none\" for human records"));
                }
            }
            Label::Machine => {
                if self.source_model.as_deref().is_none_or(str::is_empty) {
                    return Err(violation("source_model", "required for machine records"));
                }
            }
        }
        Ok(())
    }
}

/// A validated corpus with its pairing index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    records: Vec<CorpusRecord>,
}

impl Corpus {
    /// Validates records: unique ids, label-dependent fields, and every
    /// machine `pair_id` resolving to exactly one human record in the same
    /// dataset.
    pub fn from_records(records: Vec<CorpusRecord>) -> Result<Self, CorpusError> {
        let mut ids = HashSet::new();
        for (i, r) in records.iter().enumerate() {
            r.check(i + 1)?;
            if !ids.insert(r.id.as_str()) {
                return Err(CorpusError::SchemaViolation {
                    line: i + 1,
                    field: "id",
                    message: format!("duplicate id {:?}", r.id),
                });
            }
        }
        let mut humans: HashMap<(&str, &str), usize> = HashMap::new();
        for r in records.iter().filter(|r| r.label == Label::Human) {
            *humans
                .entry((r.dataset.as_str(), r.pair_id.as_str()))
                .or_default() += 1;
        }
        for r in records.iter().filter(|r| r.label == Label::Machine) {
            if humans.get(&(r.dataset.as_str(), r.pair_id.as_str())) != Some(&1) {
                return Err(CorpusError::DanglingPair(r.pair_id.clone()));
            }
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[CorpusRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Human record and its machine counterparts, keyed by (dataset, pair_id).
    pub fn pairing_index(&self) -> BTreeMap<(&str, &str), Pairing<'_>> {
        let mut index: BTreeMap<(&str, &str), Pairing<'_>> = BTreeMap::new();
        for r in &self.records {
            let entry = index
                .entry((r.dataset.as_str(), r.pair_id.as_str()))
                .or_default();
            match r.label {
                Label::Human => entry.human = Some(r),
                Label::Machine => entry.counterparts.push(r),
            }
        }
        index
    }

    /// Order-preserving subset matching every set field of `filter`.
    pub fn select(&self, filter: &Filter) -> Vec<&CorpusRecord> {
        self.records.iter().filter(|r| filter.matches(r)).collect()
    }

    /// Serializes back to JSONL, one record per line.
    pub fn to_jsonl(&self) -> String {
        self.records
            .iter()
            .map(|r| serde_json::to_string(r).expect("corpus records serialize") + "\n")
            .collect()
    }
}

#[derive(Debug, Default, Clone, PartialEq)]
pub struct Pairing<'a> {
    pub human: Option<&'a CorpusRecord>,
    pub counterparts: Vec<&'a CorpusRecord>,
}

/// Selection criteria; unset fields match everything.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Filter {
    pub domain: Option<String>,
    pub dataset: Option<String>,
    pub source_model: Option<String>,
    pub attack: Option<Attack>,
}

impl Filter {
    pub fn matches(&self, r: &CorpusRecord) -> bool {
        self.domain.as_ref().is_none_or(|d| *d == r.domain)
            && self.dataset.as_ref().is_none_or(|d| *d == r.dataset)
            && self
                .source_model
                .as_ref()
                .is_none_or(|m| r.source_model.as_ref() == Some(m))
            && self.attack.is_none_or(|a| a == r.attack)
    }
}

/// Parses and validates corpus JSONL. Blank lines are skipped; line numbers
/// in diagnostics are 1-based file lines.
pub fn parse_corpus(text: &str) -> Result<Corpus, CorpusError> {
    let mut records = Vec::new();
    let mut lines = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: CorpusRecord = serde_json::from_str(line).map_err(|e| {
            let field = missing_field(&e.to_string());
            match field {
                Some(field) => CorpusError::SchemaViolation {
                    line: i + 1,
                    field,
                    message: e.to_string(),
                },
                None => CorpusError::Parse {
                    line: i + 1,
                    message: e.to_string(),
                },
            }
        })?;
        record.check(i + 1)?;
        records.push(record);
        lines.push(i + 1);
    }
    Corpus::from_records(records).map_err(|e| match e {
        CorpusError::SchemaViolation {
            line,
            field,
            message,
        } => CorpusError::SchemaViolation {
            line: lines[line - 1],
            field,
            message,
        },
        other => other,
    })
}

fn missing_field(msg: &str) -> Option<&'static str> {
    const FIELDS: [&str; 8] = [
        "id",
        "pair_id",
        "label",
        "source_model",
        "domain",
        "dataset",
        "attack",
        "text",
    ];
    let name = msg.strip_prefix("missing field `")?.split('`').next()?;
    FIELDS.into_iter().find(|f| *f == name)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    parse_corpus(&fs::read_to_string(path)?)
}
