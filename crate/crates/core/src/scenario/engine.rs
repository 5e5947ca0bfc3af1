use std::sync::Arc;
use std::time::{Duration, Instant};

use thiserror::Error;
use tokio::sync::{mpsc, Semaphore};
use tracing::{debug, info};

use super::{
    schedule_arrivals, ConfigError, QueryMeasurement, QuerySample, ScenarioConfig, ScenarioKind,
};
use crate::client::{ClientError, InferenceClient};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid scenario config: {0}")]
    Config(#[from] ConfigError),
    #[error("no query samples supplied")]
    NoSamples,
    #[error("endpoint unreachable: {0}")]
    Transport(#[source] ClientError),
}

/// Number of queries a run issues: at least `min_query_count`, at least one
/// pass over the samples, and for Server enough arrivals to span
/// `min_duration` at the target rate.
pub fn planned_query_count(config: &ScenarioConfig, n_samples: usize) -> usize {
    let mut n = config.min_query_count.max(n_samples);
    if config.scenario == ScenarioKind::Server && config.target_qps > 0.0 {
        let by_duration = (config.min_duration.as_secs_f64() * config.target_qps).ceil() as usize;
        n = n.max(by_duration);
    }
    n
}

/// Drives one scenario run against `client`, returning a measurement per
/// issued query ordered by sequence number.
///
/// Samples are cycled when fewer than [`planned_query_count`] are supplied.
/// Server mode issues each query at its scheduled offset (late queries go out
/// immediately); both modes cap in-flight queries at `max_concurrency`.
/// Per-query failures are recorded on the measurement; only an unreachable
/// endpoint aborts the run.
pub async fn run_scenario(
    config: &ScenarioConfig,
    samples: &[QuerySample],
    client: &InferenceClient,
) -> Result<Vec<QueryMeasurement>, RunError> {
    config.validate()?;
    if samples.is_empty() {
        return Err(RunError::NoSamples);
    }
    client
        .check_reachable()
        .await
        .map_err(RunError::Transport)?;

    let n = planned_query_count(config, samples.len());
    let offsets = schedule_arrivals(config, n)?;
    info!(scenario = %config.scenario, queries = n, "starting run");

    let slots = Arc::new(Semaphore::new(config.max_concurrency));
    let (tx, mut rx) = mpsc::unbounded_channel::<QueryMeasurement>();
    let collector = tokio::spawn(async move {
        let mut out = Vec::with_capacity(n);
        while let Some(m) = rx.recv().await {
            out.push(m);
        }
        out
    });

    let origin = Instant::now();
    for (seq, &offset) in offsets.iter().enumerate() {
        if config.scenario == ScenarioKind::Server {
            tokio::time::sleep_until((origin + Duration::from_nanos(offset)).into()).await;
        }
        let permit = slots
            .clone()
            .acquire_owned()
            .await
            .expect("semaphore is never closed");
        let sample = samples[seq % samples.len()].clone();
        let client = client.clone();
        let tx = tx.clone();
        tokio::spawn(async move {
            let m = client.send_query(&sample, seq as u64, origin, offset).await;
            drop(permit);
            // Receiver lives until every sender is gone.
            let _ = tx.send(m);
        });
    }
    drop(tx);

    let mut measurements = collector.await.expect("collector task panicked");
    measurements.sort_by_key(|m| m.id);
    debug!(
        failed = measurements.iter().filter(|m| !m.is_success()).count(),
        "run finished"
    );
    Ok(measurements)
}
