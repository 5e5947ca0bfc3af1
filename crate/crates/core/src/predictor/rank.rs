use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{CostBook, Estimate, MemoryBook, Method, PredictError, PredictionQuery, Predictor};

/// Runtime and KV-cache headroom above raw weight bytes. Heuristic.
pub const DEFAULT_OVERHEAD_FACTOR: f64 = 1.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostedPrediction {
    pub accelerator_key: String,
    pub predicted_per_accel_throughput: f64,
    pub accelerators_needed: u32,
    /// Per single accelerator: throughput · 3600 / cost per hour.
    pub tokens_per_dollar: f64,
    pub cost_per_hour: f64,
    pub fits_memory: bool,
    pub support: usize,
    pub method: Method,
    pub extrapolated: bool,
    pub predicted_ttft_p99_ms: Option<f64>,
    pub feasible: bool,
    pub violations: Vec<String>,
}

/// A candidate reported but left out of the ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Unranked {
    pub accelerator_key: String,
    /// `no-cost` or `no-data`.
    pub reason: String,
    pub estimate: Option<Estimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    /// Feasible candidates first, each part by descending tokens per dollar.
    pub ranked: Vec<CostedPrediction>,
    pub unranked: Vec<Unranked>,
}

fn cost_it(
    est: Estimate,
    cost: f64,
    query: &PredictionQuery,
    bytes_per_param: f64,
    memory: &MemoryBook,
    overhead_factor: f64,
) -> CostedPrediction {
    let need_gb = query.params_b * bytes_per_param * overhead_factor;
    let mut violations = Vec::new();
    let (accelerators_needed, fits_memory) = match memory.get(&est.accelerator_key) {
        Some(gb) if query.constraints.must_fit_memory => {
            (((need_gb / gb - 1e-9).ceil() as u32).max(1), true)
        }
        Some(gb) => (1, need_gb <= gb),
        None => {
            if query.constraints.must_fit_memory {
                violations.push("memory_unknown".to_string());
            }
            (1, false)
        }
    };
    if let Some(min) = query.constraints.min_throughput {
        if est.per_accel_throughput * (accelerators_needed as f64) < min {
            violations.push("min_throughput".to_string());
        }
    }
    if let Some(max) = query.constraints.max_ttft {
        match est.ttft_p99_ms {
            Some(t) if t <= max => {}
            Some(_) => violations.push("max_ttft".to_string()),
            None => violations.push("max_ttft_unknown".to_string()),
        }
    }
    CostedPrediction {
        tokens_per_dollar: est.per_accel_throughput * 3600.0 / cost,
        predicted_per_accel_throughput: est.per_accel_throughput,
        accelerators_needed,
        cost_per_hour: cost,
        fits_memory,
        support: est.support,
        method: est.method,
        extrapolated: est.extrapolated,
        predicted_ttft_p99_ms: est.ttft_p99_ms,
        feasible: violations.is_empty(),
        violations,
        accelerator_key: est.accelerator_key,
    }
}

fn order(a: &CostedPrediction, b: &CostedPrediction) -> Ordering {
    b.feasible
        .cmp(&a.feasible)
        .then(b.tokens_per_dollar.total_cmp(&a.tokens_per_dollar))
        .then_with(|| a.accelerator_key.cmp(&b.accelerator_key))
}

/// Predicts, costs and orders every candidate accelerator. Candidates without
/// a cost or without data are listed in `unranked`.
pub fn rank(
    predictor: &Predictor,
    query: &PredictionQuery,
    costs: &CostBook,
    memory: &MemoryBook,
    overhead_factor: f64,
) -> Result<RankReport, PredictError> {
    let bytes_per_param = query.bytes_per_param()?;
    if !(overhead_factor > 0.0 && overhead_factor.is_finite()) {
        return Err(PredictError::InvalidQuery(format!(
            "overhead_factor must be > 0, got {overhead_factor}"
        )));
    }
    let mut ranked = Vec::new();
    let mut unranked = Vec::new();
    for (key, est) in predictor.predict(query)? {
        match (est, costs.get(&key)) {
            (Ok(est), Some(cost)) => ranked.push(cost_it(
                est,
                cost,
                query,
                bytes_per_param,
                memory,
                overhead_factor,
            )),
            (Ok(est), None) => unranked.push(Unranked {
                accelerator_key: key,
                reason: "no-cost".into(),
                estimate: Some(est),
            }),
            (Err(_), _) => unranked.push(Unranked {
                accelerator_key: key,
                reason: "no-data".into(),
                estimate: None,
            }),
        }
    }
    ranked.sort_by(order);
    Ok(RankReport { ranked, unranked })
}
