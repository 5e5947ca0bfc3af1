//! Throughput prediction and cost-efficiency ranking over the result dataset.
//!
//! Each (accelerator, scenario) group of Tokens/s records gets a log-linear
//! model of per-accelerator throughput in model size and weight width when it
//! spans at least three model sizes, and inverse-distance nearest-neighbour
//! interpolation otherwise. Candidates are ranked by tokens per dollar.

mod fit;
mod rank;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fit::{
    fit_log_linear, FitError, GroupFit, LabelledPoint, LogLinear, Method, Predictor, TrainingPoint,
    MIN_REGRESSION_SIZES,
};
pub use rank::{rank, CostedPrediction, RankReport, Unranked, DEFAULT_OVERHEAD_FACTOR};

use crate::dataset::bytes_per_param;
use crate::scenario::ScenarioKind;

#[derive(Debug, Error, PartialEq)]
pub enum PredictError {
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("no data for accelerator `{0}`")]
    NoData(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum BookError {
    #[error("malformed book: {0}")]
    Parse(String),
    #[error("`{key}`: value must be > 0, got {value}")]
    NonPositive { key: String, value: f64 },
}

fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn parse_book(text: &str) -> Result<BTreeMap<String, f64>, BookError> {
    let raw: BTreeMap<String, f64> =
        serde_json::from_str(text).map_err(|e| BookError::Parse(e.to_string()))?;
    check_book(raw)
}

fn check_book(raw: BTreeMap<String, f64>) -> Result<BTreeMap<String, f64>, BookError> {
    raw.into_iter()
        .map(|(k, v)| {
            if v > 0.0 && v.is_finite() {
                Ok((collapse_ws(&k), v))
            } else {
                Err(BookError::NonPositive { key: k, value: v })
            }
        })
        .collect()
}

/// Accelerator cost in currency per hour, keyed by accelerator key.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CostBook(BTreeMap<String, f64>);

impl CostBook {
    pub fn new(costs: BTreeMap<String, f64>) -> Result<Self, BookError> {
        check_book(costs).map(Self)
    }

    pub fn from_json(text: &str) -> Result<Self, BookError> {
        parse_book(text).map(Self)
    }

    pub fn get(&self, accelerator_key: &str) -> Option<f64> {
        self.0.get(accelerator_key).copied()
    }

    /// Entries of `overrides` replace or extend this book.
    pub fn merged(&self, overrides: &CostBook) -> CostBook {
        let mut out = self.0.clone();
        out.extend(overrides.0.iter().map(|(k, v)| (k.clone(), *v)));
        CostBook(out)
    }

    pub fn scaled(&self, factor: f64) -> CostBook {
        CostBook(
            self.0
                .iter()
                .map(|(k, v)| (k.clone(), v * factor))
                .collect(),
        )
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

/// Accelerator memory in GB, keyed by accelerator key.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MemoryBook(BTreeMap<String, f64>);

impl MemoryBook {
    pub fn new(memory: BTreeMap<String, f64>) -> Result<Self, BookError> {
        check_book(memory).map(Self)
    }

    pub fn from_json(text: &str) -> Result<Self, BookError> {
        parse_book(text).map(Self)
    }

    pub fn get(&self, accelerator_key: &str) -> Option<f64> {
        self.0.get(accelerator_key).copied()
    }

    pub fn merged(&self, overrides: &MemoryBook) -> MemoryBook {
        let mut out = self.0.clone();
        out.extend(overrides.0.iter().map(|(k, v)| (k.clone(), *v)));
        MemoryBook(out)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Constraints {
    /// Tokens/s across all accelerators of the deployment.
    #[serde(default)]
    pub min_throughput: Option<f64>,
    #[serde(default)]
    pub max_ttft: Option<f64>,
    #[serde(default)]
    pub must_fit_memory: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionQuery {
    pub params_b: f64,
    pub weight_data_type: String,
    pub scenario: ScenarioKind,
    #[serde(default)]
    pub constraints: Constraints,
    /// Restrict candidates to these accelerator keys.
    #[serde(default)]
    pub accelerators: Option<Vec<String>>,
}

impl PredictionQuery {
    pub fn new(params_b: f64, weight_data_type: impl Into<String>, scenario: ScenarioKind) -> Self {
        Self {
            params_b,
            weight_data_type: weight_data_type.into(),
            scenario,
            constraints: Constraints::default(),
            accelerators: None,
        }
    }

    /// Validates the query and returns its bytes per parameter.
    pub fn bytes_per_param(&self) -> Result<f64, PredictError> {
        if !(self.params_b > 0.0 && self.params_b.is_finite()) {
            return Err(PredictError::InvalidQuery(format!(
                "params_b must be > 0, got {}",
                self.params_b
            )));
        }
        bytes_per_param(&self.weight_data_type)
            .map_err(|e| PredictError::InvalidQuery(e.to_string()))
    }
}

/// Per-accelerator throughput estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub accelerator_key: String,
    pub per_accel_throughput: f64,
    pub support: usize,
    pub method: Method,
    pub extrapolated: bool,
    pub ttft_p99_ms: Option<f64>,
}

/// One candidate accelerator and its estimate, or why it has none.
pub type CandidateEstimate = (String, Result<Estimate, PredictError>);

impl Predictor {
    /// Estimates throughput on every candidate accelerator. A candidate with no
    /// fitted group for the query's scenario yields `NoData` for that entry
    /// only.
    pub fn predict(&self, query: &PredictionQuery) -> Result<Vec<CandidateEstimate>, PredictError> {
        let bpp = query.bytes_per_param()?;
        let candidates = match &query.accelerators {
            Some(list) => list.iter().map(|k| collapse_ws(k)).collect(),
            None => self.accelerators(query.scenario),
        };
        Ok(candidates
            .into_iter()
            .map(|key| {
                let est = match self.group(&key, query.scenario) {
                    Some(g) => Ok(Estimate {
                        accelerator_key: key.clone(),
                        per_accel_throughput: g.estimate(query.params_b, bpp),
                        support: g.support(),
                        method: g.method(),
                        extrapolated: g.is_extrapolation(query.params_b),
                        ttft_p99_ms: g.ttft_p99_ms(),
                    }),
                    None => Err(PredictError::NoData(key.clone())),
                };
                (key, est)
            })
            .collect())
    }
}
