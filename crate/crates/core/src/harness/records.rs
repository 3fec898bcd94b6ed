//! Append-only JSONL record files, one per configuration.
//!
//! A crash mid-write leaves at most one partial final line. Readers drop
//! it; [`RecordWriter::open`] truncates it before appending.

use std::collections::BTreeSet;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use log::warn;
use thiserror::Error;

use crate::metrics::InferenceRecord;

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("record file {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("record file {path} line {line}: {reason}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("record file {path} holds records for manifest {found}, not {expected}")]
    ManifestMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },
    #[error("duplicate record for `{sample_id}` in {path}")]
    Duplicate { path: PathBuf, sample_id: String },
}

pub fn records_path(dir: &Path, config_id: &str) -> PathBuf {
    dir.join(format!("{config_id}.jsonl"))
}

struct Parsed {
    records: Vec<InferenceRecord>,
    /// Byte length of the well-formed prefix.
    valid_len: u64,
}

/// Parses JSONL, tolerating a malformed final line that lacks a newline.
pub fn parse_jsonl(text: &str) -> Result<(Vec<InferenceRecord>, usize), (usize, String)> {
    let mut records = Vec::new();
    let mut valid_len = 0;
    let mut offset = 0;
    for (i, raw) in text.split_inclusive('\n').enumerate() {
        // only the final line can lack a newline
        if !raw.ends_with('\n') {
            break;
        }
        offset += raw.len();
        let line = raw.trim();
        if !line.is_empty() {
            let r = serde_json::from_str::<InferenceRecord>(line).map_err(|e| (i + 1, e.to_string()))?;
            records.push(r);
        }
        valid_len = offset;
    }
    Ok((records, valid_len))
}

fn read_file(path: &Path) -> Result<Parsed, RecordError> {
    let io = |source| RecordError::Io {
        path: path.to_path_buf(),
        source,
    };
    let text = std::fs::read_to_string(path).map_err(io)?;
    let (records, valid_len) = parse_jsonl(&text).map_err(|(line, reason)| RecordError::Corrupt {
        path: path.to_path_buf(),
        line,
        reason,
    })?;
    if valid_len < text.len() {
        warn!("{}: ignoring partial final line", path.display());
    }
    Ok(Parsed {
        records,
        valid_len: valid_len as u64,
    })
}

/// Every complete record in `path`.
pub fn load_records(path: impl AsRef<Path>) -> Result<Vec<InferenceRecord>, RecordError> {
    Ok(read_file(path.as_ref())?.records)
}

/// All `*.jsonl` files in `dir`, in file-name order.
pub fn load_records_dir(dir: impl AsRef<Path>) -> Result<Vec<InferenceRecord>, RecordError> {
    let dir = dir.as_ref();
    let io = |source| RecordError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
        .collect();
    files.sort();
    let mut all = Vec::new();
    for f in files {
        all.extend(load_records(&f)?);
    }
    Ok(all)
}

/// Single writer for one configuration's record file.
pub struct RecordWriter {
    path: PathBuf,
    file: File,
    done: BTreeSet<String>,
}

impl RecordWriter {
    /// Opens or creates the file, dropping any partial final line, and
    /// refuses files written against another manifest.
    pub fn open(path: impl AsRef<Path>, manifest_digest: &str) -> Result<Self, RecordError> {
        let path = path.as_ref().to_path_buf();
        let io = |source| RecordError::Io {
            path: path.clone(),
            source,
        };
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(io)?;
        }
        let mut done = BTreeSet::new();
        if path.exists() {
            let parsed = read_file(&path)?;
            for r in &parsed.records {
                if r.manifest_digest != manifest_digest {
                    return Err(RecordError::ManifestMismatch {
                        path,
                        expected: manifest_digest.to_string(),
                        found: r.manifest_digest.clone(),
                    });
                }
                if !done.insert(r.sample_id.clone()) {
                    return Err(RecordError::Duplicate {
                        path,
                        sample_id: r.sample_id.clone(),
                    });
                }
            }
            let f = OpenOptions::new().write(true).open(&path).map_err(io)?;
            f.set_len(parsed.valid_len).map_err(io)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(&path).map_err(io)?;
        Ok(Self { path, file, done })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn is_done(&self, sample_id: &str) -> bool {
        self.done.contains(sample_id)
    }

    pub fn completed(&self) -> usize {
        self.done.len()
    }

    /// Appends one record and syncs it to disk.
    pub fn append(&mut self, record: &InferenceRecord) -> Result<(), RecordError> {
        if !self.done.insert(record.sample_id.clone()) {
            return Err(RecordError::Duplicate {
                path: self.path.clone(),
                sample_id: record.sample_id.clone(),
            });
        }
        let mut line = serde_json::to_string(record).expect("records serialise");
        line.push('\n');
        let io = |source| RecordError::Io {
            path: self.path.clone(),
            source,
        };
        self.file.write_all(line.as_bytes()).map_err(io)?;
        self.file.sync_data().map_err(io)
    }
}

/// Sample ids present in a record file, without loading full records.
pub fn completed_ids(path: &Path) -> Result<BTreeSet<String>, RecordError> {
    let file = File::open(path).map_err(|source| RecordError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut ids = BTreeSet::new();
    for line in BufReader::new(file).lines().map_while(Result::ok) {
        if let Ok(v) = serde_json::from_str::<serde_json::Value>(&line) {
            if let Some(id) = v["sample_id"].as_str() {
                ids.insert(id.to_string());
            }
        }
    }
    Ok(ids)
}
