//! Experiment runner around the `seqmix` simulation library: flat-file
//! configs, reproducible batch runs fanned out over threads, NDJSON record
//! emission with a distribution oracle sidecar, and summaries of accuracy,
//! failure rates, and cost scaling.

pub mod config;
pub mod experiments;
pub mod records;
pub mod summarize;
