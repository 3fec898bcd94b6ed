//! On-disk knowledge base format.
//!
//! ```text
//! "CXKB"                      4-byte magic
//! header_len: u32 LE          length of the JSON header
//! header: JSON                {"version":1,"embedder_id":..,"dim":..,"count":..,"entries":[{"sample_id":..,"label":..}]}
//! vectors: f32 LE             count * dim values, entry order
//! ```
//!
//! Vectors are stored unnormalised.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{EmbeddingEntry, KbError, KnowledgeBase};
use crate::diagnosis::Label;
use crate::runtime::EmbeddingVector;

pub const MAGIC: &[u8; 4] = b"CXKB";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt knowledge base store: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Invalid(#[from] KbError),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    version: u32,
    embedder_id: String,
    dim: usize,
    count: usize,
    entries: Vec<EntryHeader>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntryHeader {
    sample_id: String,
    label: Label,
}

pub fn encode(kb: &KnowledgeBase) -> Vec<u8> {
    let header = Header {
        version: VERSION,
        embedder_id: kb.embedder_id().to_string(),
        dim: kb.dim(),
        count: kb.len(),
        entries: kb
            .entries()
            .iter()
            .map(|e| EntryHeader {
                sample_id: e.sample_id.clone(),
                label: e.label,
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serialises");
    let mut out = Vec::with_capacity(8 + json.len() + kb.len() * kb.dim() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for e in kb.entries() {
        for v in &e.vector.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn corrupt(msg: impl Into<String>) -> StoreError {
    StoreError::Corrupt(msg.into())
}

pub fn decode(bytes: &[u8]) -> Result<KnowledgeBase, StoreError> {
    if bytes.len() < 8 {
        return Err(corrupt("file shorter than the fixed preamble"));
    }
    if &bytes[..4] != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let header_len = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let body_start = 8usize
        .checked_add(header_len)
        .filter(|end| *end <= bytes.len())
        .ok_or_else(|| corrupt("header length exceeds file size"))?;
    let header: Header = serde_json::from_slice(&bytes[8..body_start])
        .map_err(|e| corrupt(format!("header: {e}")))?;
    if header.version != VERSION {
        return Err(corrupt(format!("unsupported version {}", header.version)));
    }
    if header.count != header.entries.len() {
        return Err(corrupt(format!(
            "header count {} but {} entries listed",
            header.count,
            header.entries.len()
        )));
    }
    if header.dim == 0 {
        return Err(corrupt("dimension 0"));
    }
    let expected = header
        .count
        .checked_mul(header.dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| corrupt("vector block size overflows"))?;
    let body = &bytes[body_start..];
    if body.len() != expected {
        return Err(corrupt(format!(
            "vector block is {} bytes, expected {expected}",
            body.len()
        )));
    }
    let mut entries = Vec::with_capacity(header.count);
    for (i, (meta, chunk)) in header
        .entries
        .into_iter()
        .zip(body.chunks_exact(header.dim * 4))
        .enumerate()
    {
        let values = chunk
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        let vector = EmbeddingVector::new(header.embedder_id.clone(), values)
            .map_err(|e| corrupt(format!("entry {i}: {e}")))?;
        entries.push(EmbeddingEntry {
            sample_id: meta.sample_id,
            label: meta.label,
            vector,
        });
    }
    Ok(KnowledgeBase::new(header.embedder_id, header.dim, entries)?)
}

pub fn save(kb: &KnowledgeBase, path: impl AsRef<Path>) -> Result<(), StoreError> {
    std::fs::write(path, encode(kb))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<KnowledgeBase, StoreError> {
    decode(&std::fs::read(path)?)
}
