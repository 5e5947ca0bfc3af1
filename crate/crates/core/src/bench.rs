//! End-to-end benchmark workflow: probe, run, summarize, score, write the
//! result files and append the record to the store.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::json;
use thiserror::Error;
use tracing::info;

use crate::accuracy::{evaluate_run, AccuracyReport};
use crate::client::{ClientError, EndpointConfig, InferenceClient};
use crate::dataset::{
    from_run, DatasetStore, FromRunError, OpenMLPerfRecord, RunDescriptor, StoreError,
};
use crate::scenario::{
    run_scenario, summarize, QueryMeasurement, QuerySample, RunError, RunSummary, ScenarioConfig,
    SummaryError,
};

pub const MEASUREMENTS_FILE: &str = "measurements.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const ACCURACY_FILE: &str = "accuracy.json";
pub const RECORD_FILE: &str = "record.json";

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Summary(#[from] SummaryError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("bad samples file: {0}")]
    Samples(String),
}

impl BenchError {
    /// True for failures to reach the server or touch the filesystem.
    pub fn is_io_or_transport(&self) -> bool {
        matches!(
            self,
            BenchError::Client(ClientError::Transport(_))
                | BenchError::Run(RunError::Transport(_))
                | BenchError::Io { .. }
                | BenchError::Store(_)
        )
    }
}

/// Parses a samples file: one prompt per line, either plain text or a JSON
/// object with `prompt` and optional `id` and `max_tokens`. Plain lines are
/// numbered from 0.
pub fn parse_samples(text: &str, default_max_tokens: u32) -> Result<Vec<QuerySample>, BenchError> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let next_id = out.len() as u64;
        if line.starts_with('{') {
            let v: serde_json::Value = serde_json::from_str(line)
                .map_err(|e| BenchError::Samples(format!("line {}: {e}", lineno + 1)))?;
            let prompt = v.get("prompt").and_then(|p| p.as_str()).ok_or_else(|| {
                BenchError::Samples(format!("line {}: missing `prompt`", lineno + 1))
            })?;
            let id = v.get("id").and_then(|x| x.as_u64()).unwrap_or(next_id);
            let max_tokens = v
                .get("max_tokens")
                .and_then(|x| x.as_u64())
                .map_or(default_max_tokens, |x| x as u32);
            out.push(QuerySample::new(id, prompt, max_tokens));
        } else {
            out.push(QuerySample::new(next_id, line, default_max_tokens));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct BenchPlan {
    pub config: ScenarioConfig,
    pub endpoint: EndpointConfig,
    pub samples: Vec<QuerySample>,
    /// Reference outputs by sample id; enables ROUGE scoring.
    pub references: Option<HashMap<u64, String>>,
    /// `framework` is filled from the server probe when left empty.
    pub descriptor: RunDescriptor,
    pub out_dir: Option<PathBuf>,
    pub store_path: Option<PathBuf>,
}

#[derive(Debug)]
pub struct BenchOutcome {
    pub measurements: Vec<QueryMeasurement>,
    pub summary: RunSummary,
    pub accuracy: Option<AccuracyReport>,
    pub framework: String,
    pub record: Result<OpenMLPerfRecord, FromRunError>,
}

fn write_file(path: &Path, contents: &str) -> Result<(), BenchError> {
    let io = |source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(contents.as_bytes()).map_err(io)
}

/// Accuracy over successful queries whose sample has a reference.
fn score(measurements: &[QueryMeasurement], refs: &HashMap<u64, String>) -> Option<AccuracyReport> {
    let (outs, rs): (Vec<QueryMeasurement>, Vec<String>) = measurements
        .iter()
        .filter(|m| m.is_success())
        .filter_map(|m| refs.get(&m.sample_id).map(|r| (m.clone(), r.clone())))
        .unzip();
    evaluate_run(&outs, &rs).ok()
}

pub async fn bench_run(plan: BenchPlan) -> Result<BenchOutcome, BenchError> {
    let client = InferenceClient::new(plan.endpoint.clone())?;
    let framework = if plan.descriptor.framework.is_empty() {
        client.probe().await?
    } else {
        plan.descriptor.framework.clone()
    };
    let measurements = run_scenario(&plan.config, &plan.samples, &client).await?;

    if let Some(dir) = &plan.out_dir {
        fs::create_dir_all(dir).map_err(|source| BenchError::Io {
            path: dir.clone(),
            source,
        })?;
        let lines: String = measurements
            .iter()
            .map(|m| serde_json::to_string(m).expect("measurement serializes") + "\n")
            .collect();
        write_file(&dir.join(MEASUREMENTS_FILE), &lines)?;
    }

    let summary = summarize(&measurements, &plan.config)?;
    let accuracy = plan
        .references
        .as_ref()
        .and_then(|r| score(&measurements, r));
    let descriptor = RunDescriptor {
        framework: framework.clone(),
        fields: plan.descriptor.fields.clone(),
    };
    let record = from_run(&summary, accuracy.as_ref(), &descriptor);

    if let Some(dir) = &plan.out_dir {
        let pretty = |v: &serde_json::Value| serde_json::to_string_pretty(v).expect("json") + "\n";
        write_file(&dir.join(SUMMARY_FILE), &pretty(&json!(summary)))?;
        if let Some(a) = &accuracy {
            write_file(&dir.join(ACCURACY_FILE), &pretty(&json!(a)))?;
        }
        if let Ok(r) = &record {
            write_file(&dir.join(RECORD_FILE), &pretty(&r.clone().into_value()))?;
        }
    }
    if let (Ok(r), Some(path)) = (&record, &plan.store_path) {
        let mut store = DatasetStore::open(path)?;
        store.append(r.clone())?;
        info!(store = %path.display(), "record appended");
    }

    Ok(BenchOutcome {
        measurements,
        summary,
        accuracy,
        framework,
        record,
    })
}
