//! Flat, dot-keyed benchmark result records: ingestion and cleaning, feature
//! extraction, conversion from harness runs, and the append-only store.

mod featurize;
mod from_run;
mod record;
mod store;

pub use featurize::{
    bytes_per_param, canonical_accelerator_key, featurize, FeatureVector, FeaturizeError,
};
pub use from_run::{from_run, FromRunError, RunDescriptor};
pub use record::{
    canonical_key, canonical_units, flatten, ingest, parse_raw_records, validate, IngestError,
    OpenMLPerfRecord, Violation,
};
pub use store::{load_records, query, snapshot, DatasetStore, Predicate, QueryError, StoreError};

/// Canonical record keys.
pub mod keys {
    pub const ACCURACY: &str = "metrics.accuracy";
    pub const RESULT: &str = "metrics.result";
    pub const RESULT_PER_ACCEL: &str = "metrics.result_per_accelerator";
    pub const UNITS: &str = "metrics.units";
    pub const TTFT_P99_MS: &str = "metrics.ttft_p99_ms";
    pub const LATENCY_P99_MS: &str = "metrics.latency_p99_ms";
    pub const TPOT_MEAN_MS: &str = "metrics.tpot_mean_ms";
    pub const MODEL_ARCH: &str = "model.architecture";
    pub const MODEL_MLPERF_NAME: &str = "model.mlperf_name";
    pub const MODEL_NAME: &str = "model.name";
    pub const MODEL_PARAMS: &str = "model.number_of_parameters";
    pub const MODEL_DTYPE: &str = "model.weight_data_types";
    pub const FRAMEWORK: &str = "software.framework";
    pub const OS: &str = "software.operating_system";
    pub const AVAILABILITY: &str = "submission.availability";
    pub const DIVISION: &str = "submission.division";
    pub const ORGANIZATION: &str = "submission.organization";
    pub const SCENARIO: &str = "submission.scenario";
    pub const ACCEL_PER_NODE: &str = "system.accelerator.count_per_node";
    pub const ACCEL_NAME: &str = "system.accelerator.name";
    pub const ACCEL_TOTAL: &str = "system.accelerator.total_count";
    pub const ACCEL_VENDOR: &str = "system.accelerator.vendor";
    pub const CPU_CACHES: &str = "system.cpu.caches";
    pub const CPU_CORES: &str = "system.cpu.core_count";
    pub const CPU_PER_NODE: &str = "system.cpu.count_per_node";
    pub const CPU_MODEL: &str = "system.cpu.model";
    pub const INTERCONNECT_ACCEL: &str = "system.interconnect.accelerator";
    pub const INTERCONNECT_HOST: &str = "system.interconnect.accelerator_host";
    pub const SYSTEM_NAME: &str = "system.name";
    pub const NODES: &str = "system.number_of_nodes";
    pub const SYSTEM_TYPE: &str = "system.type";

    pub const MANDATORY: &[&str] = &[RESULT, UNITS, ACCEL_TOTAL];

    pub const FLOAT_KEYS: &[&str] = &[
        RESULT,
        RESULT_PER_ACCEL,
        MODEL_PARAMS,
        TTFT_P99_MS,
        LATENCY_P99_MS,
        TPOT_MEAN_MS,
    ];

    pub const INTEGER_KEYS: &[&str] =
        &[ACCEL_PER_NODE, ACCEL_TOTAL, CPU_CORES, CPU_PER_NODE, NODES];

    /// Every key of the published schema; filters may name any of these even
    /// when no stored record carries them.
    pub const SCHEMA: &[&str] = &[
        ACCURACY,
        RESULT,
        RESULT_PER_ACCEL,
        UNITS,
        MODEL_ARCH,
        MODEL_MLPERF_NAME,
        MODEL_NAME,
        MODEL_PARAMS,
        MODEL_DTYPE,
        FRAMEWORK,
        OS,
        AVAILABILITY,
        DIVISION,
        ORGANIZATION,
        SCENARIO,
        ACCEL_PER_NODE,
        ACCEL_NAME,
        ACCEL_TOTAL,
        ACCEL_VENDOR,
        CPU_CACHES,
        CPU_CORES,
        CPU_PER_NODE,
        CPU_MODEL,
        INTERCONNECT_ACCEL,
        INTERCONNECT_HOST,
        SYSTEM_NAME,
        NODES,
        SYSTEM_TYPE,
    ];
}
