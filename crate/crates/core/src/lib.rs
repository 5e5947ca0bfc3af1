//! Load generation, metric capture and cost-aware configuration ranking for
//! LLM inference servers.
//!
//! The crate is organised around the life of one benchmark result:
//!
//! * [`scenario`] schedules queries (Offline or Server), drives an
//!   [`client::InferenceClient`] and reduces the raw measurements to a
//!   [`scenario::RunSummary`].
//! * [`sim`] is a deterministic stand-in inference server whose timing model
//!   makes every reported metric checkable against closed-form expectations.
//! * [`accuracy`] scores generated text with ROUGE-1/2/L.
//! * [`dataset`] holds the flat dot-keyed result record, its normalisation and
//!   feature extraction, and the append-only record store.
//! * [`predictor`] fits per-accelerator throughput models over the dataset and
//!   ranks hardware by tokens per dollar.
//! * [`api`] serves records and rankings over HTTP for the dashboard.

pub mod accuracy;
pub mod api;
pub mod bench;
pub mod client;
pub mod dataset;
pub mod par;
pub mod predictor;
pub mod scenario;
pub mod sim;

pub use scenario::{QueryMeasurement, QuerySample, RunSummary, ScenarioConfig, ScenarioKind};
