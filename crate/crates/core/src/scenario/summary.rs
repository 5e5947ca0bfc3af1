use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{nearest_rank, ns_to_ms, QueryMeasurement, ScenarioConfig, ScenarioKind};
use crate::par;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SummaryError {
    #[error("no successful measurements to summarize")]
    NoSuccessfulQueries,
}

/// Aggregated metrics of one scenario run. Times are milliseconds unless the
/// field name says otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: ScenarioKind,
    pub target_qps: Option<f64>,
    pub completed_queries: u64,
    pub failed_queries: u64,
    pub total_output_tokens: u64,
    pub wall_time_s: f64,
    pub throughput_tokens_per_s: f64,
    pub achieved_qps: f64,
    pub latency_p50_ms: f64,
    pub latency_p90_ms: f64,
    pub latency_p99_ms: f64,
    pub ttft_p50_ms: f64,
    pub ttft_p90_ms: f64,
    pub ttft_p99_ms: f64,
    pub tpot_mean_ms: Option<f64>,
    pub tokens_per_sample_mean: f64,
    pub valid: bool,
    pub invalid_reasons: Vec<String>,
}

/// Reduces raw measurements to a [`RunSummary`].
///
/// Wall time spans from the earliest scheduled query to the last completion,
/// so throughput can be recomputed exactly from the measurement file.
/// Percentiles are nearest-rank over the successful queries.
pub fn summarize(
    measurements: &[QueryMeasurement],
    config: &ScenarioConfig,
) -> Result<RunSummary, SummaryError> {
    let ok: Vec<&QueryMeasurement> = measurements.iter().filter(|m| m.is_success()).collect();
    if ok.is_empty() {
        return Err(SummaryError::NoSuccessfulQueries);
    }
    let completed = ok.len() as u64;
    let total_tokens: u64 = ok.iter().map(|m| m.output_tokens).sum();

    let start = measurements
        .iter()
        .map(|m| m.scheduled_at)
        .min()
        .unwrap_or(0);
    let end = ok
        .iter()
        .filter_map(|m| m.completed_at)
        .max()
        .unwrap_or(start);
    let wall_time_s = end.saturating_sub(start) as f64 / 1e9;

    let mut latencies: Vec<u64> = ok.iter().filter_map(|m| m.latency_ns()).collect();
    let mut ttfts: Vec<u64> = ok.iter().filter_map(|m| m.ttft_ns()).collect();
    par::sort_unstable(&mut latencies);
    par::sort_unstable(&mut ttfts);
    let pct = |xs: &[u64], p: f64| nearest_rank(xs, p).map(ns_to_ms).unwrap_or(0.0);

    let tpots: Vec<f64> = ok.iter().filter_map(|m| m.tpot_ns()).collect();
    let tpot_mean_ms = if tpots.is_empty() {
        None
    } else {
        Some(tpots.iter().sum::<f64>() / tpots.len() as f64 / 1e6)
    };

    let (throughput, achieved_qps) = if wall_time_s > 0.0 {
        (
            total_tokens as f64 / wall_time_s,
            completed as f64 / wall_time_s,
        )
    } else {
        (0.0, 0.0)
    };

    let mut summary = RunSummary {
        scenario: config.scenario,
        target_qps: (config.scenario == ScenarioKind::Server).then_some(config.target_qps),
        completed_queries: completed,
        failed_queries: (measurements.len() - ok.len()) as u64,
        total_output_tokens: total_tokens,
        wall_time_s,
        throughput_tokens_per_s: throughput,
        achieved_qps,
        latency_p50_ms: pct(&latencies, 50.0),
        latency_p90_ms: pct(&latencies, 90.0),
        latency_p99_ms: pct(&latencies, 99.0),
        ttft_p50_ms: pct(&ttfts, 50.0),
        ttft_p90_ms: pct(&ttfts, 90.0),
        ttft_p99_ms: pct(&ttfts, 99.0),
        tpot_mean_ms,
        tokens_per_sample_mean: total_tokens as f64 / completed as f64,
        valid: true,
        invalid_reasons: Vec::new(),
    };
    summary.invalid_reasons = validity_reasons(&summary, config);
    summary.valid = summary.invalid_reasons.is_empty();
    Ok(summary)
}

fn validity_reasons(s: &RunSummary, config: &ScenarioConfig) -> Vec<String> {
    let mut reasons = Vec::new();
    if (s.completed_queries as usize) < config.min_query_count {
        reasons.push("min_query_count".to_string());
    }
    if s.wall_time_s < config.min_duration.as_secs_f64() {
        reasons.push("min_duration".to_string());
    }
    if config.scenario == ScenarioKind::Server {
        if let Some(limit) = config.ttft_limit_ms {
            if s.ttft_p99_ms > limit {
                reasons.push("ttft_p99".to_string());
            }
        }
        if let (Some(limit), Some(tpot)) = (config.tpot_limit_ms, s.tpot_mean_ms) {
            if tpot > limit {
                reasons.push("tpot_mean".to_string());
            }
        }
    }
    reasons
}
