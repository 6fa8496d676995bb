//! Datasets, caching, end-to-end runs and accuracy evaluation.

mod cache;
mod config;
mod dataset;
mod eval;
mod manifest;
mod pipeline;

pub use cache::Cache;
pub use config::{Config, Endpoint, Endpoints, Models, ENV_OVERRIDES};
pub use dataset::{load_dataset, Dataset, DatasetRecord, LineError, RawRecord, Split, MAX_BAD_LINE_FRACTION};
pub use eval::{evaluate, EvalReport, LabelStats, RecordFailure};
pub use manifest::{unix_now, RunManifest};
pub use pipeline::{
    cached_bundle, cached_story, predict_all, predictions_from_jsonl, predictions_to_jsonl, prepare,
    reason, run_pipeline, Prediction, Prepared, Services, StageFailure,
};
