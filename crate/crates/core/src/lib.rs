//! Benchmarking harness for binary chest X-ray classification.
//!
//! Three kinds of configuration are compared on the same labelled test set:
//! local discriminative classifiers loaded from ONNX files, remote
//! chat-completion endpoints restricted to a two-line probability answer, and
//! the same endpoints given similarity evidence retrieved from an embedding
//! knowledge base. Every inference is timed and converted into a carbon
//! footprint using an instance power model, and the results are summarised as
//! diagnostic accuracy tables, confidence histograms and sustained-use
//! comparisons.
//!
//! Module map:
//!
//! * [`carbon`] instance-power carbon model and sustained-use baselines
//! * [`runtime`] ONNX model loading, preprocessing, classification and embeddings
//! * [`llm`] prompt construction, the chat-completion client, answer parsing
//!   and the bundled mock server
//! * [`kb`] embedding knowledge bases, cosine retrieval and the store format
//! * [`metrics`] confusion matrices, rates, latency statistics, histograms
//! * [`harness`] manifests, run files, record persistence, runs and reports

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::large_enum_variant)]

pub mod carbon;
pub mod diagnosis;
pub mod harness;
pub mod kb;
pub mod llm;
pub mod metrics;
pub mod runtime;

pub use diagnosis::{Diagnosis, Label};
