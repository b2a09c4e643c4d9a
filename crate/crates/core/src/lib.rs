//! Streaming detection of aggressive posts on micro-blogging streams.
//!
//! The crate holds the whole pipeline: ingestion, cleaning, feature
//! extraction, normalization, incremental learners with replica merging, the
//! micro-batch engine and prequential evaluation.

pub mod api;
pub mod engine;
pub mod evaluate;
pub mod features;
pub mod ingest;
pub mod jobs;
pub mod learners;
pub mod model;
pub mod normalize;
pub mod textprep;
pub mod util;
