//! Editable natural-language interest portraits built from movie-rating
//! histories, plus the tooling to classify user edits and analyze the
//! behavioral logs that come out of a deployment.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod domain;
pub mod edits;
pub mod ingest;
pub mod jsonl;
pub mod metrics;
pub mod pipeline;
pub mod semantic;
pub mod server;
pub mod service;
pub mod simulate;
pub mod stats;
pub mod store;
pub mod summarize;
pub mod synth;
pub mod treemap;
