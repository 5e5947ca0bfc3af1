use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::{Number, Value};
use thiserror::Error;

use super::keys;

#[derive(Debug, Error, PartialEq)]
pub enum IngestError {
    #[error("record is not an object")]
    NotAnObject,
    #[error("missing mandatory keys: {}", .0.join(", "))]
    MissingKeys(Vec<String>),
    #[error("cannot coerce `{key}` value {value} to a number")]
    Coercion { key: String, value: String },
    #[error("malformed input: {0}")]
    Parse(String),
}

/// One benchmark result as a flat map of dot-delimited keys. Key order is
/// preserved so records round-trip byte-for-byte.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OpenMLPerfRecord(IndexMap<String, Value>);

impl OpenMLPerfRecord {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.0.get(key)
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.0.get(key).and_then(Value::as_str)
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.0.get(key).and_then(Value::as_f64)
    }

    pub fn insert(&mut self, key: impl Into<String>, value: impl Into<Value>) -> Option<Value> {
        self.0.insert(key.into(), value.into())
    }

    pub fn contains_key(&self, key: &str) -> bool {
        self.0.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Value)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Compact single-line JSON, the store's on-disk form.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(&self.0).expect("JSON values always serialize")
    }

    pub fn into_value(self) -> Value {
        Value::Object(self.0.into_iter().collect())
    }
}

/// Canonical key form: typesetting escapes (`\_`) removed, whitespace trimmed.
pub fn canonical_key(key: &str) -> String {
    key.trim().replace("\\_", "_")
}

fn flatten_into(prefix: &str, value: &Value, out: &mut IndexMap<String, Value>) {
    match value {
        Value::Object(map) if !map.is_empty() => {
            for (k, v) in map {
                let k = canonical_key(k);
                let key = if prefix.is_empty() {
                    k
                } else {
                    format!("{prefix}.{k}")
                };
                flatten_into(&key, v, out);
            }
        }
        other => {
            out.insert(prefix.to_string(), other.clone());
        }
    }
}

/// Flattens nested objects by joining keys with `.`; already-flat maps pass
/// through with canonicalised keys.
pub fn flatten(raw: &Value) -> Result<IndexMap<String, Value>, IngestError> {
    if !raw.is_object() {
        return Err(IngestError::NotAnObject);
    }
    let mut out = IndexMap::new();
    flatten_into("", raw, &mut out);
    Ok(out)
}

fn parse_number_text(key: &str, text: &str) -> Option<f64> {
    let t = text.trim().replace(',', "");
    if let Ok(x) = t.parse::<f64>() {
        return x.is_finite().then_some(x);
    }
    // Parameter counts show up as "8B" / "350M" in heterogeneous sources.
    if key == keys::MODEL_PARAMS {
        let lower = t.to_ascii_lowercase();
        if let Some(b) = lower.strip_suffix('b') {
            return b.trim().parse::<f64>().ok().filter(|x| x.is_finite());
        }
        if let Some(m) = lower.strip_suffix('m') {
            return m
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .map(|x| x / 1000.0);
        }
    }
    None
}

fn coerce(key: &str, value: &Value, integer: bool) -> Result<Value, IngestError> {
    let err = || IngestError::Coercion {
        key: key.to_string(),
        value: value.to_string(),
    };
    let x = match value {
        Value::Number(n) => {
            if integer && (n.is_i64() || n.is_u64()) {
                return Ok(value.clone());
            }
            if !integer {
                return Ok(value.clone());
            }
            n.as_f64().ok_or_else(err)?
        }
        Value::String(s) => parse_number_text(key, s).ok_or_else(err)?,
        _ => return Err(err()),
    };
    if integer {
        if x.fract() != 0.0 {
            return Err(err());
        }
        Ok(Value::Number(Number::from(x as i64)))
    } else {
        Number::from_f64(x).map(Value::Number).ok_or_else(err)
    }
}

/// Maps unit spellings onto `Tokens/s`, `Queries/s` or `Samples/s`; other
/// strings are only trimmed.
pub fn canonical_units(units: &str) -> String {
    let squashed: String = units
        .to_ascii_lowercase()
        .chars()
        .filter(|c| !c.is_whitespace())
        .collect();
    let per_second = ["/s", "/sec", "/second", "persecond", "persec", "ps"];
    for (stem, canonical) in [
        ("tokens", "Tokens/s"),
        ("token", "Tokens/s"),
        ("queries", "Queries/s"),
        ("query", "Queries/s"),
        ("samples", "Samples/s"),
        ("sample", "Samples/s"),
    ] {
        if let Some(rest) = squashed.strip_prefix(stem) {
            if per_second.contains(&rest) {
                return canonical.to_string();
            }
        }
    }
    units.trim().to_string()
}

/// Cleans one raw record: flattens, canonicalises keys, checks mandatory
/// fields, coerces numeric fields, canonicalises units and derives
/// `metrics.result_per_accelerator` when absent. Unknown keys are kept.
/// Idempotent.
pub fn ingest(raw: &Value) -> Result<OpenMLPerfRecord, IngestError> {
    let mut map = flatten(raw)?;

    let missing: Vec<String> = keys::MANDATORY
        .iter()
        .filter(|k| map.get(**k).is_none_or(Value::is_null))
        .map(|k| k.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(IngestError::MissingKeys(missing));
    }

    for key in keys::FLOAT_KEYS {
        if let Some(v) = map.get(*key) {
            if !v.is_null() {
                let c = coerce(key, v, false)?;
                map.insert(key.to_string(), c);
            }
        }
    }
    for key in keys::INTEGER_KEYS {
        if let Some(v) = map.get(*key) {
            if !v.is_null() {
                let c = coerce(key, v, true)?;
                map.insert(key.to_string(), c);
            }
        }
    }

    if let Some(Value::String(u)) = map.get(keys::UNITS) {
        let canon = canonical_units(u);
        map.insert(keys::UNITS.to_string(), Value::String(canon));
    }

    if map.get(keys::RESULT_PER_ACCEL).is_none_or(Value::is_null) {
        let result = map.get(keys::RESULT).and_then(Value::as_f64);
        let total = map.get(keys::ACCEL_TOTAL).and_then(Value::as_f64);
        if let (Some(r), Some(t)) = (result, total) {
            if t > 0.0 {
                if let Some(n) = Number::from_f64(r / t) {
                    let idx = map.get_index_of(keys::RESULT).map_or(map.len(), |i| i + 1);
                    map.shift_insert(idx, keys::RESULT_PER_ACCEL.to_string(), Value::Number(n));
                }
            }
        }
    }

    Ok(OpenMLPerfRecord(map))
}

/// A failed invariant on one key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub key: String,
    pub message: String,
}

/// Checks the record-level invariants that [`ingest`] does not enforce.
pub fn validate(record: &OpenMLPerfRecord) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |key: &str, message: String| {
        out.push(Violation {
            key: key.to_string(),
            message,
        })
    };
    let result = record.get_f64(keys::RESULT);
    match result {
        Some(r) if r < 0.0 => push(keys::RESULT, format!("must be >= 0, got {r}")),
        None => push(keys::RESULT, "missing or non-numeric".into()),
        _ => {}
    }
    let total = record.get_f64(keys::ACCEL_TOTAL);
    match total {
        Some(t) if t < 1.0 => push(keys::ACCEL_TOTAL, format!("must be >= 1, got {t}")),
        None => push(keys::ACCEL_TOTAL, "missing or non-numeric".into()),
        _ => {}
    }
    if let Some(p) = record.get(keys::MODEL_PARAMS) {
        match p.as_f64() {
            Some(x) if x > 0.0 => {}
            _ => push(keys::MODEL_PARAMS, format!("must be > 0, got {p}")),
        }
    }
    if let (Some(r), Some(t), Some(per)) = (result, total, record.get_f64(keys::RESULT_PER_ACCEL)) {
        if t >= 1.0 {
            let rel = (per * t - r).abs() / r.abs().max(f64::MIN_POSITIVE);
            if rel > 1e-3 {
                push(
                    keys::RESULT_PER_ACCEL,
                    format!("{per} x {t} accelerators does not match result {r}"),
                );
            }
        }
    }
    out
}

/// Splits a record file into raw objects. Accepts JSON lines, a JSON array,
/// a single object, or an export snapshot `{"records": [...]}`.
pub fn parse_raw_records(text: &str) -> Result<Vec<Value>, IngestError> {
    match parse_raw_records_strict(text) {
        // Typeset listings escape underscores (`\_`), which is not valid JSON.
        Err(e) if text.contains("\\_") => {
            parse_raw_records_strict(&text.replace("\\_", "_")).map_err(|_| e)
        }
        other => other,
    }
}

fn parse_raw_records_strict(text: &str) -> Result<Vec<Value>, IngestError> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Ok(Vec::new());
    }
    if let Ok(v) = serde_json::from_str::<Value>(trimmed) {
        return Ok(match v {
            Value::Array(items) => items,
            Value::Object(ref obj) if obj.get("records").is_some_and(Value::is_array) => {
                obj["records"].as_array().cloned().unwrap_or_default()
            }
            other => vec![other],
        });
    }
    trimmed
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| IngestError::Parse(format!("line {}: {e}", i + 1)))
        })
        .collect()
}
