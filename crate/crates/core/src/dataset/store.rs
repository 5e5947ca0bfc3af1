use std::collections::HashSet;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use thiserror::Error;

use super::{ingest, keys, parse_raw_records, IngestError, OpenMLPerfRecord};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} record {index}: {source}")]
    Ingest {
        path: PathBuf,
        index: usize,
        #[source]
        source: IngestError,
    },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum QueryError {
    #[error("unknown filter key `{0}`")]
    UnknownKey(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Predicate {
    Eq(String),
    Ge(f64),
    Le(f64),
}

impl Predicate {
    /// `>=x` and `<=x` become numeric bounds; anything else is equality.
    pub fn parse(text: &str) -> Predicate {
        let bound = |rest: &str| rest.trim().parse::<f64>().ok();
        if let Some(x) = text.strip_prefix(">=").and_then(bound) {
            Predicate::Ge(x)
        } else if let Some(x) = text.strip_prefix("<=").and_then(bound) {
            Predicate::Le(x)
        } else {
            Predicate::Eq(text.to_string())
        }
    }

    pub fn matches(&self, value: Option<&Value>) -> bool {
        let Some(value) = value else { return false };
        match self {
            Predicate::Eq(expected) => match value {
                Value::String(s) => s == expected,
                Value::Number(n) => {
                    n.to_string() == *expected || expected.trim().parse::<f64>().ok() == n.as_f64()
                }
                other => expected.as_str() == other.to_string().as_str(),
            },
            Predicate::Ge(x) => value.as_f64().is_some_and(|v| v >= *x),
            Predicate::Le(x) => value.as_f64().is_some_and(|v| v <= *x),
        }
    }
}

fn sort_key(r: &OpenMLPerfRecord) -> (String, String) {
    (
        r.get_str(keys::MODEL_NAME).unwrap_or_default().to_string(),
        r.get_str(keys::ACCEL_NAME).unwrap_or_default().to_string(),
    )
}

/// Conjunctive filter over flat keys, stably ordered by
/// `(model.name, system.accelerator.name)`. A filter key must belong to the
/// schema or appear in at least one record.
pub fn query(
    records: &[OpenMLPerfRecord],
    filter: &[(String, Predicate)],
) -> Result<Vec<OpenMLPerfRecord>, QueryError> {
    if !filter.is_empty() {
        let mut known: HashSet<&str> = keys::SCHEMA.iter().copied().collect();
        known.extend(records.iter().flat_map(|r| r.keys()));
        if let Some((k, _)) = filter.iter().find(|(k, _)| !known.contains(k.as_str())) {
            return Err(QueryError::UnknownKey(k.clone()));
        }
    }
    let mut out: Vec<OpenMLPerfRecord> = records
        .iter()
        .filter(|r| filter.iter().all(|(k, p)| p.matches(r.get(k))))
        .cloned()
        .collect();
    out.sort_by_cached_key(sort_key);
    Ok(out)
}

/// The export document: `{"count": n, "records": [...]}`, the same shape
/// `/api/records` answers with. Ingesting it yields the records unchanged.
pub fn snapshot(records: &[OpenMLPerfRecord]) -> Value {
    json!({ "count": records.len(), "records": records })
}

/// Append-only line-delimited record file with an in-memory copy.
#[derive(Debug, Default)]
pub struct DatasetStore {
    path: Option<PathBuf>,
    records: Vec<OpenMLPerfRecord>,
}

impl DatasetStore {
    pub fn in_memory(records: Vec<OpenMLPerfRecord>) -> Self {
        Self {
            path: None,
            records,
        }
    }

    /// Loads `path` if it exists; a missing file is an empty store that is
    /// created on first append.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let records = if path.exists() {
            let text = fs::read_to_string(&path).map_err(|source| StoreError::Io {
                path: path.clone(),
                source,
            })?;
            load_records(&path, &text)?
        } else {
            Vec::new()
        };
        Ok(Self {
            path: Some(path),
            records,
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn records(&self) -> &[OpenMLPerfRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn append(&mut self, record: OpenMLPerfRecord) -> Result<(), StoreError> {
        if let Some(path) = &self.path {
            let io = |source| StoreError::Io {
                path: path.clone(),
                source,
            };
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(io)?;
            }
            let mut f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(io)?;
            let mut line = record.to_json_line();
            line.push('\n');
            f.write_all(line.as_bytes()).map_err(io)?;
        }
        self.records.push(record);
        Ok(())
    }

    pub fn query(
        &self,
        filter: &[(String, Predicate)],
    ) -> Result<Vec<OpenMLPerfRecord>, QueryError> {
        query(&self.records, filter)
    }
}

/// Parses and ingests every record in `text` (any shape accepted by
/// [`parse_raw_records`]).
pub fn load_records(path: &Path, text: &str) -> Result<Vec<OpenMLPerfRecord>, StoreError> {
    let raw = parse_raw_records(text).map_err(|source| StoreError::Ingest {
        path: path.to_path_buf(),
        index: 0,
        source,
    })?;
    raw.iter()
        .enumerate()
        .map(|(i, v)| {
            ingest(v).map_err(|source| StoreError::Ingest {
                path: path.to_path_buf(),
                index: i + 1,
                source,
            })
        })
        .collect()
}
