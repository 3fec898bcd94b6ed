//! Labelled image manifests.
//!
//! CSV with a header row. `path` and `label` are required; `sample_id`
//! defaults to the file stem and `split` (train/test) is optional. Relative
//! paths resolve against the manifest's directory.
//!
//! ```text
//! sample_id,path,label,split
//! p001,images/p001.png,positive,test
//! n001,images/n001.png,negative,train
//! ```

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::diagnosis::Label;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("io error reading manifest: {0}")]
    Io(#[from] std::io::Error),
    #[error("manifest line {line}: {reason}")]
    Row { line: u64, reason: String },
    #[error("manifest header: {0}")]
    Header(String),
    #[error("duplicate sample id `{0}`")]
    DuplicateId(String),
    #[error("manifest is empty")]
    Empty,
    #[error("image for `{sample_id}` not found at {path}")]
    MissingImage { sample_id: String, path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    /// No split column; the row serves either role.
    Unspecified,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub sample_id: String,
    pub path: PathBuf,
    pub label: Label,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledManifest {
    rows: Vec<ManifestRow>,
    digest: String,
}

impl LabeledManifest {
    /// Parses manifest text; relative paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ManifestError> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| ManifestError::Header(e.to_string()))?
            .clone();
        let column = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
        let path_col = column("path").ok_or_else(|| ManifestError::Header("missing `path` column".into()))?;
        let label_col =
            column("label").ok_or_else(|| ManifestError::Header("missing `label` column".into()))?;
        let id_col = column("sample_id");
        let split_col = column("split");

        let mut rows = Vec::new();
        let mut ids = BTreeSet::new();
        for record in reader.records() {
            let record = record.map_err(|e| ManifestError::Row {
                line: e.position().map(|p| p.line()).unwrap_or(0),
                reason: e.to_string(),
            })?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            let row_err = |reason: String| ManifestError::Row { line, reason };
            let raw_path = record.get(path_col).unwrap_or("");
            if raw_path.is_empty() {
                return Err(row_err("empty path".into()));
            }
            let label: Label = record
                .get(label_col)
                .unwrap_or("")
                .parse()
                .map_err(|e: crate::diagnosis::LabelError| row_err(e.to_string()))?;
            let path = PathBuf::from(raw_path);
            let sample_id = match id_col.and_then(|c| record.get(c)).filter(|s| !s.is_empty()) {
                Some(id) => id.to_string(),
                None => path
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .filter(|s| !s.is_empty())
                    .ok_or_else(|| row_err(format!("cannot derive sample id from `{raw_path}`")))?
                    .to_string(),
            };
            let split = match split_col.and_then(|c| record.get(c)).map(str::to_ascii_lowercase) {
                None => Split::Unspecified,
                Some(s) if s.is_empty() => Split::Unspecified,
                Some(s) if s == "train" => Split::Train,
                Some(s) if s == "test" => Split::Test,
                Some(s) => return Err(row_err(format!("unknown split `{s}`"))),
            };
            if !ids.insert(sample_id.clone()) {
                return Err(ManifestError::DuplicateId(sample_id));
            }
            let path = if path.is_absolute() {
                path
            } else {
                base_dir.join(path)
            };
            rows.push(ManifestRow {
                sample_id,
                path,
                label,
                split,
            });
        }
        if rows.is_empty() {
            return Err(ManifestError::Empty);
        }
        Ok(Self {
            rows,
            digest: hex::encode(Sha256::digest(text.as_bytes())),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ManifestError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn rows(&self) -> &[ManifestRow] {
        &self.rows
    }

    /// SHA-256 of the manifest text; identifies the manifest version.
    pub fn digest(&self) -> &str {
        &self.digest
    }

    /// Rows tagged `split` plus rows with no split tag.
    pub fn rows_for(&self, split: Split) -> Vec<&ManifestRow> {
        self.rows
            .iter()
            .filter(|r| r.split == split || r.split == Split::Unspecified)
            .collect()
    }

    /// Test rows, capped at `per_class` of each label in manifest order.
    pub fn balanced_test_rows(&self, per_class: Option<usize>) -> Vec<&ManifestRow> {
        let mut positives = 0;
        let mut negatives = 0;
        self.rows_for(Split::Test)
            .into_iter()
            .filter(|r| {
                let counter = match r.label {
                    Label::Positive => &mut positives,
                    Label::Negative => &mut negatives,
                };
                *counter += 1;
                per_class.is_none_or(|cap| *counter <= cap)
            })
            .collect()
    }

    pub fn check_paths<'a>(rows: impl IntoIterator<Item = &'a ManifestRow>) -> Result<(), ManifestError> {
        for row in rows {
            if !row.path.is_file() {
                return Err(ManifestError::MissingImage {
                    sample_id: row.sample_id.clone(),
                    path: row.path.clone(),
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_and_minimal_forms() {
        let m = LabeledManifest::parse(
            "sample_id,path,label,split\na,img/a.png,positive,test\nb,/abs/b.png,negative,train\n",
            Path::new("/data"),
        )
        .unwrap();
        assert_eq!(m.rows()[0].path, PathBuf::from("/data/img/a.png"));
        assert_eq!(m.rows()[1].path, PathBuf::from("/abs/b.png"));
        assert_eq!(m.rows_for(Split::Test).len(), 1);
        assert_eq!(m.digest().len(), 64);

        let minimal = LabeledManifest::parse("path,label\nx/p1.jpg,1\nx/n1.jpg,0\n", Path::new(".")).unwrap();
        assert_eq!(minimal.rows()[0].sample_id, "p1");
        assert_eq!(minimal.rows()[1].label, Label::Negative);
        assert_eq!(minimal.rows_for(Split::Train).len(), 2);
        assert_eq!(minimal.rows_for(Split::Test).len(), 2);
    }

    #[test]
    fn rejects_bad_manifests() {
        let base = Path::new(".");
        assert!(matches!(
            LabeledManifest::parse("path\nx.png\n", base),
            Err(ManifestError::Header(_))
        ));
        assert!(matches!(
            LabeledManifest::parse("path,label\n", base),
            Err(ManifestError::Empty)
        ));
        assert!(matches!(
            LabeledManifest::parse("path,label\na.png,maybe\n", base),
            Err(ManifestError::Row { .. })
        ));
        assert!(matches!(
            LabeledManifest::parse("path,label\nd/a.png,1\ne/a.png,0\n", base),
            Err(ManifestError::DuplicateId(_))
        ));
        assert!(matches!(
            LabeledManifest::parse("path,label,split\na.png,1,validation\n", base),
            Err(ManifestError::Row { .. })
        ));
    }

    #[test]
    fn balanced_split_caps_each_class() {
        let mut text = String::from("path,label,split\n");
        for i in 0..5 {
            text.push_str(&format!("p{i}.png,positive,test\nn{i}.png,negative,test\n"));
        }
        text.push_str("t.png,positive,train\n");
        let m = LabeledManifest::parse(&text, Path::new(".")).unwrap();
        let rows = m.balanced_test_rows(Some(2));
        assert_eq!(rows.len(), 4);
        assert_eq!(m.balanced_test_rows(None).len(), 10);
    }

    #[test]
    fn digest_tracks_content() {
        let a = LabeledManifest::parse("path,label\na.png,1\n", Path::new(".")).unwrap();
        let b = LabeledManifest::parse("path,label\na.png,0\n", Path::new(".")).unwrap();
        assert_ne!(a.digest(), b.digest());
    }
}
