//! MLPerf-style scenarios: query scheduling, the run loop, and aggregation of
//! per-query measurements into a run summary.

mod engine;
mod percentile;
mod schedule;
mod summary;

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use engine::{planned_query_count, run_scenario, RunError};
pub use percentile::nearest_rank;
pub use schedule::schedule_arrivals;
pub use summary::{summarize, RunSummary, SummaryError};

/// Default run-length bounds, scaled down from MLPerf's for desk-sized runs.
pub const DEFAULT_MIN_QUERY_COUNT: usize = 100;
pub const DEFAULT_MIN_DURATION: Duration = Duration::from_secs(10);
pub const DEFAULT_MAX_CONCURRENCY: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScenarioKind {
    /// Every query is available at start; the metric is aggregate throughput.
    Offline,
    /// Queries arrive as a Poisson stream at a target rate.
    Server,
}

impl ScenarioKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScenarioKind::Offline => "Offline",
            ScenarioKind::Server => "Server",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown scenario `{0}` (expected Offline or Server)")]
pub struct UnknownScenario(pub String);

impl FromStr for ScenarioKind {
    type Err = UnknownScenario;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "offline" => Ok(ScenarioKind::Offline),
            "server" => Ok(ScenarioKind::Server),
            _ => Err(UnknownScenario(s.to_string())),
        }
    }
}

/// Named latency-constraint presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatencyPreset {
    /// TTFT p99 ≤ 2000 ms, mean TPOT ≤ 200 ms.
    DatacenterLlm,
}

impl LatencyPreset {
    /// `(ttft_limit_ms, tpot_limit_ms)`
    pub fn limits(&self) -> (f64, f64) {
        match self {
            LatencyPreset::DatacenterLlm => (2000.0, 200.0),
        }
    }
}

impl FromStr for LatencyPreset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "datacenter-llm" => Ok(LatencyPreset::DatacenterLlm),
            other => Err(format!("unknown latency preset `{other}`")),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("server scenario requires target_qps > 0 (got {0})")]
    NonPositiveQps(f64),
    #[error("min_query_count must be at least 1")]
    ZeroQueryCount,
    #[error("max_concurrency must be at least 1")]
    ZeroConcurrency,
    #[error("query count must be at least 1")]
    EmptySchedule,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    /// Queries per second; only meaningful for [`ScenarioKind::Server`].
    pub target_qps: f64,
    pub min_query_count: usize,
    pub min_duration: Duration,
    pub max_concurrency: usize,
    pub ttft_limit_ms: Option<f64>,
    pub tpot_limit_ms: Option<f64>,
    pub rng_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioKind::Offline,
            target_qps: 0.0,
            min_query_count: DEFAULT_MIN_QUERY_COUNT,
            min_duration: DEFAULT_MIN_DURATION,
            max_concurrency: DEFAULT_MAX_CONCURRENCY,
            ttft_limit_ms: None,
            tpot_limit_ms: None,
            rng_seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn offline() -> Self {
        Self::default()
    }

    pub fn server(target_qps: f64) -> Self {
        Self {
            scenario: ScenarioKind::Server,
            target_qps,
            ..Self::default()
        }
    }

    pub fn with_preset(mut self, preset: LatencyPreset) -> Self {
        let (ttft, tpot) = preset.limits();
        self.ttft_limit_ms = Some(ttft);
        self.tpot_limit_ms = Some(tpot);
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.scenario == ScenarioKind::Server
            && (self.target_qps.is_nan() || self.target_qps <= 0.0)
        {
            return Err(ConfigError::NonPositiveQps(self.target_qps));
        }
        if self.min_query_count == 0 {
            return Err(ConfigError::ZeroQueryCount);
        }
        if self.max_concurrency == 0 {
            return Err(ConfigError::ZeroConcurrency);
        }
        Ok(())
    }
}

/// One dataset sample handed to the load generator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuerySample {
    pub id: u64,
    pub prompt_tokens: u32,
    pub requested_output_tokens: u32,
    pub prompt_text: String,
}

impl QuerySample {
    /// Builds a sample, counting prompt tokens by whitespace split.
    pub fn new(id: u64, prompt_text: impl Into<String>, requested_output_tokens: u32) -> Self {
        let prompt_text = prompt_text.into();
        let prompt_tokens = prompt_text.split_whitespace().count().max(1) as u32;
        Self {
            id,
            prompt_tokens,
            requested_output_tokens: requested_output_tokens.max(1),
            prompt_text,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryErrorKind {
    Timeout,
    Protocol,
    Transport,
}

impl fmt::Display for QueryErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QueryErrorKind::Timeout => "timeout",
            QueryErrorKind::Protocol => "protocol",
            QueryErrorKind::Transport => "transport",
        })
    }
}

/// Timestamps are nanoseconds on a monotonic clock, relative to the run origin.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryMeasurement {
    /// Sequence number within the run.
    pub id: u64,
    /// Id of the dataset sample that was sent.
    pub sample_id: u64,
    pub scheduled_at: u64,
    pub issued_at: u64,
    pub first_token_at: Option<u64>,
    pub completed_at: Option<u64>,
    pub output_tokens: u64,
    pub output_text: String,
    pub error: Option<QueryErrorKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_message: Option<String>,
}

impl QueryMeasurement {
    pub fn is_success(&self) -> bool {
        self.error.is_none() && self.first_token_at.is_some() && self.completed_at.is_some()
    }

    pub fn ttft_ns(&self) -> Option<u64> {
        self.first_token_at
            .map(|t| t.saturating_sub(self.issued_at))
    }

    pub fn latency_ns(&self) -> Option<u64> {
        self.completed_at.map(|t| t.saturating_sub(self.issued_at))
    }

    /// Mean inter-token interval after the first token; undefined for a
    /// single-token response.
    pub fn tpot_ns(&self) -> Option<f64> {
        match (self.first_token_at, self.completed_at) {
            (Some(first), Some(done)) if self.output_tokens > 1 => {
                Some(done.saturating_sub(first) as f64 / (self.output_tokens - 1) as f64)
            }
            _ => None,
        }
    }
}

pub fn ns_to_ms(ns: u64) -> f64 {
    ns as f64 / 1e6
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn server_requires_positive_qps() {
        assert_eq!(
            ScenarioConfig::server(0.0).validate(),
            Err(ConfigError::NonPositiveQps(0.0))
        );
        assert!(ScenarioConfig::server(f64::NAN).validate().is_err());
        assert!(ScenarioConfig::server(1.0).validate().is_ok());
        // Offline ignores the rate entirely.
        assert!(ScenarioConfig::offline().validate().is_ok());
    }

    #[test]
    fn zero_counts_rejected() {
        let cfg = ScenarioConfig {
            min_query_count: 0,
            ..ScenarioConfig::offline()
        };
        assert_eq!(cfg.validate(), Err(ConfigError::ZeroQueryCount));
        let cfg = ScenarioConfig {
            max_concurrency: 0,
            ..ScenarioConfig::offline()
        };
        assert_eq!(cfg.validate(), Err(ConfigError::ZeroConcurrency));
    }

    #[test]
    fn scenario_parses_case_insensitively() {
        assert_eq!("server".parse::<ScenarioKind>(), Ok(ScenarioKind::Server));
        assert_eq!("Offline".parse::<ScenarioKind>(), Ok(ScenarioKind::Offline));
        assert!("SingleStream".parse::<ScenarioKind>().is_err());
    }

    #[test]
    fn datacenter_preset_limits() {
        let cfg = ScenarioConfig::server(5.0).with_preset(LatencyPreset::DatacenterLlm);
        assert_eq!(cfg.ttft_limit_ms, Some(2000.0));
        assert_eq!(cfg.tpot_limit_ms, Some(200.0));
    }

    #[test]
    fn single_token_has_no_tpot() {
        let m = QueryMeasurement {
            id: 0,
            sample_id: 0,
            scheduled_at: 0,
            issued_at: 10,
            first_token_at: Some(50),
            completed_at: Some(50),
            output_tokens: 1,
            output_text: " a".into(),
            error: None,
            error_message: None,
        };
        assert_eq!(m.tpot_ns(), None);
        assert_eq!(m.ttft_ns(), Some(40));
        assert_eq!(m.latency_ns(), Some(40));
    }
}
