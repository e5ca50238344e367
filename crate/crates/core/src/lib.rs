//! Static malware analysis over control-flow graphs.
//!
//! The pipeline runs from graph ingestion ([`ingest`], or the synthetic
//! bytecode in [`sbc`]) through exact graph properties ([`metrics`]) to a
//! fixed 23-value feature vector per sample ([`features`]). Feature tables
//! feed the classifiers and cross-validation in [`learn`]; [`report`]
//! summarizes whole corpora as CDFs.
//!
//! Heavy loops run through [`Execution`], which uses rayon when the
//! `parallel` feature is enabled and falls back to plain iteration
//! otherwise. Both paths give identical results.

pub mod exec;
pub mod features;
pub mod graph;
pub mod ingest;
pub mod learn;
pub mod metrics;
pub mod report;
pub mod sbc;

pub use exec::Execution;
pub use features::{FeatureVector, Label, FEATURE_COUNT, FEATURE_NAMES};
pub use graph::{BasicBlock, BlockId, Cfg, ComponentLabeling, GraphError};
