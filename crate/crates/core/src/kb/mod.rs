//! Label-tagged embedding knowledge bases with exhaustive cosine search.
//!
//! A knowledge base stores the raw embedding of every training image together
//! with its label. Queries return only similarity scores and labels, which
//! are rendered into a short context block for an LLM prompt; sample ids and
//! pixel data never leave this module.

mod build;
pub mod store;

pub use build::{build, build_with, BuildReport};

use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnosis::Label;
use crate::runtime::EmbeddingVector;

pub const DEFAULT_TOP_K: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum KbError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid knowledge base: {0}")]
    Invalid(String),
    #[error("build failed: {0}")]
    Build(String),
}

fn norm(values: &[f32]) -> f64 {
    values
        .iter()
        .map(|v| {
            let v = *v as f64;
            v * v
        })
        .sum::<f64>()
        .sqrt()
}

fn dot(u: &[f32], v: &[f32]) -> f64 {
    u.iter().zip(v).map(|(a, b)| *a as f64 * *b as f64).sum()
}

/// `u . v / (|u| |v|)` over raw slices, accumulated in f64 and clamped to
/// [-1, 1].
pub fn cosine(u: &[f32], v: &[f32]) -> Result<f64, KbError> {
    if u.len() != v.len() {
        return Err(KbError::InvalidArgument(format!(
            "dimension mismatch: {} vs {}",
            u.len(),
            v.len()
        )));
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 || !nu.is_finite() || !nv.is_finite() {
        return Err(KbError::InvalidArgument("zero or non-finite norm".into()));
    }
    Ok(cosine_with_norms(u, nu, v, nv))
}

fn cosine_with_norms(u: &[f32], nu: f64, v: &[f32], nv: f64) -> f64 {
    (dot(u, v) / (nu * nv)).clamp(-1.0, 1.0)
}

pub fn cosine_similarity(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64, KbError> {
    cosine(&u.values, &v.values)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingEntry {
    pub sample_id: String,
    pub label: Label,
    pub vector: EmbeddingVector,
}

/// Immutable after construction; safe to query concurrently.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeBase {
    embedder_id: String,
    dim: usize,
    entries: Vec<EmbeddingEntry>,
    norms: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub similarity: f64,
    pub label: Label,
}

/// Retrieved neighbours, most similar first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextSnippet {
    pub k: usize,
    pub neighbors: Vec<Neighbor>,
}

impl KnowledgeBase {
    /// Validates that every entry shares `embedder_id` and `dim` and that
    /// sample ids are unique.
    pub fn new(
        embedder_id: impl Into<String>,
        dim: usize,
        entries: Vec<EmbeddingEntry>,
    ) -> Result<Self, KbError> {
        let embedder_id = embedder_id.into();
        if dim == 0 {
            return Err(KbError::Invalid("dimension must be > 0".into()));
        }
        let mut ids = BTreeSet::new();
        let mut norms = Vec::with_capacity(entries.len());
        for e in &entries {
            if e.vector.dim() != dim {
                return Err(KbError::Invalid(format!(
                    "entry `{}` has dimension {} instead of {dim}",
                    e.sample_id,
                    e.vector.dim()
                )));
            }
            if e.vector.embedder_id != embedder_id {
                return Err(KbError::Invalid(format!(
                    "entry `{}` was embedded by `{}`, not `{embedder_id}`",
                    e.sample_id, e.vector.embedder_id
                )));
            }
            if !ids.insert(e.sample_id.as_str()) {
                return Err(KbError::Invalid(format!(
                    "duplicate sample id `{}`",
                    e.sample_id
                )));
            }
            let n = norm(&e.vector.values);
            if n == 0.0 || !n.is_finite() {
                return Err(KbError::Invalid(format!(
                    "entry `{}` has zero or non-finite norm",
                    e.sample_id
                )));
            }
            norms.push(n);
        }
        Ok(Self {
            embedder_id,
            dim,
            entries,
            norms,
        })
    }

    pub fn embedder_id(&self) -> &str {
        &self.embedder_id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[EmbeddingEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Top-`k` entries by cosine similarity to `query`, ties broken by
    /// ascending sample id. An empty knowledge base yields an empty snippet.
    pub fn retrieve(&self, query: &EmbeddingVector, k: usize) -> Result<ContextSnippet, KbError> {
        if k == 0 {
            return Err(KbError::InvalidArgument("k must be >= 1".into()));
        }
        if self.entries.is_empty() {
            return Ok(ContextSnippet {
                k,
                neighbors: Vec::new(),
            });
        }
        if query.dim() != self.dim {
            return Err(KbError::InvalidArgument(format!(
                "query dimension {} does not match knowledge base dimension {}",
                query.dim(),
                self.dim
            )));
        }
        let qn = norm(&query.values);
        if qn == 0.0 || !qn.is_finite() {
            return Err(KbError::InvalidArgument(
                "query has zero or non-finite norm".into(),
            ));
        }
        let mut scored: Vec<(f64, usize)> = self
            .entries
            .iter()
            .zip(&self.norms)
            .enumerate()
            .map(|(i, (e, n))| (cosine_with_norms(&query.values, qn, &e.vector.values, *n), i))
            .collect();
        let order = |a: &(f64, usize), b: &(f64, usize)| {
            b.0.total_cmp(&a.0).then_with(|| {
                self.entries[a.1]
                    .sample_id
                    .cmp(&self.entries[b.1].sample_id)
            })
        };
        let take = k.min(scored.len());
        if take < scored.len() {
            scored.select_nth_unstable_by(take - 1, order);
            scored.truncate(take);
        }
        scored.sort_by(order);
        Ok(ContextSnippet {
            k,
            neighbors: scored
                .into_iter()
                .map(|(similarity, i)| Neighbor {
                    similarity,
                    label: self.entries[i].label,
                })
                .collect(),
        })
    }
}

impl ContextSnippet {
    pub fn is_valid(&self) -> bool {
        self.neighbors
            .windows(2)
            .all(|w| w[0].similarity.partial_cmp(&w[1].similarity) != Some(Ordering::Less))
            && self.neighbors.len() <= self.k
            && self
                .neighbors
                .iter()
                .all(|n| (-1.0..=1.0).contains(&n.similarity))
    }
}

pub const CONTEXT_HEADER: &str = "Reference comparisons: the uploaded X-ray was compared by cosine similarity against labelled X-rays in a knowledge base. The most similar reference cases are:";

/// Renders a snippet as prompt context: a header line, then one line per
/// neighbour with the similarity to three decimals and the confirmed label.
pub fn render_context(snippet: &ContextSnippet) -> String {
    let mut out = String::from(CONTEXT_HEADER);
    for (i, n) in snippet.neighbors.iter().enumerate() {
        out.push_str(&format!(
            "\nReference case {}: cosine similarity {:.3}, confirmed COVID-19 {}",
            i + 1,
            n.similarity,
            n.label
        ));
    }
    out
}
