use indexmap::IndexMap;
use serde_json::{json, Value};
use thiserror::Error;

use super::{canonical_key, ingest, keys, IngestError, OpenMLPerfRecord};
use crate::accuracy::AccuracyReport;
use crate::scenario::RunSummary;

#[derive(Debug, Error, PartialEq)]
pub enum FromRunError {
    #[error("run is not valid: {}", .0.join(", "))]
    InvalidRun(Vec<String>),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

/// What the harness knows about the system under test beyond the run
/// itself: framework identity plus any `model.*`, `system.*` and
/// `submission.*` fields the operator supplies.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunDescriptor {
    pub framework: String,
    pub fields: IndexMap<String, Value>,
}

impl RunDescriptor {
    pub fn new(framework: impl Into<String>) -> Self {
        Self {
            framework: framework.into(),
            fields: IndexMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.fields.insert(canonical_key(key), value.into());
        self
    }
}

fn accuracy_text(summary: &RunSummary, accuracy: Option<&AccuracyReport>) -> String {
    match accuracy {
        Some(a) => a.to_metric_text(),
        None => format!("TOKENS_PER_SAMPLE: {:.1}", summary.tokens_per_sample_mean),
    }
}

/// Builds a normalised record from a valid run. Invalid runs are refused
/// with their validity reasons.
pub fn from_run(
    summary: &RunSummary,
    accuracy: Option<&AccuracyReport>,
    descriptor: &RunDescriptor,
) -> Result<OpenMLPerfRecord, FromRunError> {
    if !summary.valid {
        return Err(FromRunError::InvalidRun(summary.invalid_reasons.clone()));
    }
    let total = descriptor
        .fields
        .get(keys::ACCEL_TOTAL)
        .and_then(Value::as_f64)
        .filter(|t| *t >= 1.0)
        .unwrap_or(1.0);
    let result = summary.throughput_tokens_per_s;

    let mut raw: IndexMap<String, Value> = IndexMap::new();
    raw.insert(
        keys::ACCURACY.into(),
        json!(accuracy_text(summary, accuracy)),
    );
    raw.insert(keys::RESULT.into(), json!(result));
    raw.insert(keys::RESULT_PER_ACCEL.into(), json!(result / total));
    raw.insert(keys::UNITS.into(), json!("Tokens/s"));
    raw.insert(keys::TTFT_P99_MS.into(), json!(summary.ttft_p99_ms));
    raw.insert(keys::LATENCY_P99_MS.into(), json!(summary.latency_p99_ms));
    if let Some(tpot) = summary.tpot_mean_ms {
        raw.insert(keys::TPOT_MEAN_MS.into(), json!(tpot));
    }
    for (k, v) in &descriptor.fields {
        raw.entry(canonical_key(k)).or_insert_with(|| v.clone());
    }
    raw.insert(keys::FRAMEWORK.into(), json!(descriptor.framework));
    raw.insert(keys::SCENARIO.into(), json!(summary.scenario.as_str()));
    raw.entry(keys::ACCEL_TOTAL.into()).or_insert(json!(1));

    Ok(ingest(&Value::Object(raw.into_iter().collect()))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::ScenarioKind;

    fn summary(valid: bool) -> RunSummary {
        RunSummary {
            scenario: ScenarioKind::Server,
            target_qps: Some(2.0),
            completed_queries: 200,
            failed_queries: 0,
            total_output_tokens: 6400,
            wall_time_s: 16.0,
            throughput_tokens_per_s: 400.0,
            achieved_qps: 12.5,
            latency_p50_ms: 300.0,
            latency_p90_ms: 310.0,
            latency_p99_ms: 320.0,
            ttft_p50_ms: 1.0,
            ttft_p90_ms: 2.0,
            ttft_p99_ms: 3.0,
            tpot_mean_ms: Some(10.0),
            tokens_per_sample_mean: 32.0,
            valid,
            invalid_reasons: if valid {
                vec![]
            } else {
                vec!["min_query_count".into()]
            },
        }
    }

    #[test]
    fn record_from_valid_run() {
        let d = RunDescriptor::new("flexsim 0.1.0")
            .with("model.name", "sim-8b")
            .with("system.accelerator.total_count", 2);
        let r = from_run(&summary(true), None, &d).unwrap();
        assert_eq!(r.get_f64(keys::RESULT), Some(400.0));
        assert_eq!(r.get_f64(keys::RESULT_PER_ACCEL), Some(200.0));
        assert_eq!(r.get_str(keys::UNITS), Some("Tokens/s"));
        assert_eq!(r.get_str(keys::SCENARIO), Some("Server"));
        assert_eq!(r.get_str(keys::FRAMEWORK), Some("flexsim 0.1.0"));
        assert_eq!(r.get_str(keys::ACCURACY), Some("TOKENS_PER_SAMPLE: 32.0"));
        // already normalised
        assert_eq!(ingest(&r.clone().into_value()).unwrap(), r);
    }

    #[test]
    fn invalid_run_refused() {
        let err = from_run(&summary(false), None, &RunDescriptor::new("x")).unwrap_err();
        assert_eq!(
            err,
            FromRunError::InvalidRun(vec!["min_query_count".into()])
        );
    }
}
