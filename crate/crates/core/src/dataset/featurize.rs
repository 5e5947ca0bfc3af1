use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{keys, OpenMLPerfRecord};
use crate::scenario::ScenarioKind;

#[derive(Debug, Error, PartialEq)]
pub enum FeaturizeError {
    #[error("missing `{0}`")]
    Missing(&'static str),
    #[error("unknown weight data type `{0}`")]
    UnknownDataType(String),
    #[error("unsupported scenario `{0}`")]
    UnsupportedScenario(String),
}

/// Model-size and data-type features of one record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub params_b: f64,
    pub bytes_per_param: f64,
    /// `params_b * bytes_per_param`, in GB.
    pub est_weights_gb: f64,
    pub scenario: ScenarioKind,
    pub accelerator_key: String,
    /// Present only when the record's units are `Tokens/s`.
    pub per_accel_throughput: Option<f64>,
}

fn single_dtype_bytes(name: &str) -> Option<f64> {
    let n: String = name
        .to_ascii_lowercase()
        .chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .collect();
    match n.as_str() {
        "fp32" | "float32" | "f32" | "float" => Some(4.0),
        "fp16" | "float16" | "f16" | "half" | "bf16" | "bfloat16" => Some(2.0),
        "fp8" | "float8" | "f8" | "int8" | "i8" | "fp8e4m3" | "fp8e5m2" => Some(1.0),
        "int4" | "i4" | "uint4" | "w4a16" => Some(0.5),
        _ => None,
    }
}

/// Bytes per weight for a data-type string. A comma-separated list is
/// accepted only when every entry maps to the same width.
pub fn bytes_per_param(dtype: &str) -> Result<f64, FeaturizeError> {
    let unknown = || FeaturizeError::UnknownDataType(dtype.to_string());
    let mut width: Option<f64> = None;
    for part in dtype
        .split([',', '/'])
        .map(str::trim)
        .filter(|p| !p.is_empty())
    {
        let w = single_dtype_bytes(part).ok_or_else(unknown)?;
        match width {
            Some(prev) if prev != w => return Err(unknown()),
            _ => width = Some(w),
        }
    }
    width.ok_or_else(unknown)
}

/// `vendor + name` with whitespace collapsed; the vendor is not repeated when
/// the name already starts with it. Memory suffixes are kept.
pub fn canonical_accelerator_key(vendor: Option<&str>, name: &str) -> String {
    let name = name.split_whitespace().collect::<Vec<_>>().join(" ");
    match vendor.map(|v| v.split_whitespace().collect::<Vec<_>>().join(" ")) {
        Some(v) if !v.is_empty() && !name.to_lowercase().starts_with(&v.to_lowercase()) => {
            format!("{v} {name}")
        }
        _ => name,
    }
}

pub fn featurize(record: &OpenMLPerfRecord) -> Result<FeatureVector, FeaturizeError> {
    let params_b = record
        .get_f64(keys::MODEL_PARAMS)
        .ok_or(FeaturizeError::Missing(keys::MODEL_PARAMS))?;
    let dtype = record
        .get_str(keys::MODEL_DTYPE)
        .ok_or(FeaturizeError::Missing(keys::MODEL_DTYPE))?;
    let bytes_per_param = bytes_per_param(dtype)?;
    let scenario_text = record
        .get_str(keys::SCENARIO)
        .ok_or(FeaturizeError::Missing(keys::SCENARIO))?;
    let scenario = scenario_text
        .parse()
        .map_err(|_| FeaturizeError::UnsupportedScenario(scenario_text.to_string()))?;
    let name = record
        .get_str(keys::ACCEL_NAME)
        .ok_or(FeaturizeError::Missing(keys::ACCEL_NAME))?;
    let accelerator_key = canonical_accelerator_key(record.get_str(keys::ACCEL_VENDOR), name);
    let per_accel_throughput = match record.get_str(keys::UNITS) {
        Some("Tokens/s") => record.get_f64(keys::RESULT_PER_ACCEL),
        _ => None,
    };
    Ok(FeatureVector {
        params_b,
        bytes_per_param,
        est_weights_gb: params_b * bytes_per_param,
        scenario,
        accelerator_key,
        per_accel_throughput,
    })
}
