use log::warn;

use super::{EmbeddingEntry, KbError, KnowledgeBase};
use crate::harness::manifest::{LabeledManifest, ManifestRow, Split};
use crate::runtime::{preprocess, EmbeddingVector, ModelHandle};

/// Outcome of a knowledge-base build.
#[derive(Debug)]
pub struct BuildReport {
    pub kb: KnowledgeBase,
    /// Sample ids skipped because embedding failed, with the reason.
    pub skipped: Vec<(String, String)>,
}

/// Embeds every row with `embed`, skipping failures. Aborts when more than
/// 1% of rows fail.
pub fn build_with<F>(rows: &[&ManifestRow], embedder_id: &str, mut embed: F) -> Result<BuildReport, KbError>
where
    F: FnMut(&ManifestRow) -> Result<EmbeddingVector, String>,
{
    if rows.is_empty() {
        return Err(KbError::Build("manifest has no rows to embed".into()));
    }
    let mut entries = Vec::with_capacity(rows.len());
    let mut skipped = Vec::new();
    let mut dim = None;
    for row in rows {
        match embed(row) {
            Ok(vector) => {
                let d = *dim.get_or_insert(vector.dim());
                if d != vector.dim() {
                    return Err(KbError::Build(format!(
                        "`{}` embedded to dimension {} but earlier rows had {d}",
                        row.sample_id,
                        vector.dim()
                    )));
                }
                entries.push(EmbeddingEntry {
                    sample_id: row.sample_id.clone(),
                    label: row.label,
                    vector,
                });
            }
            Err(reason) => {
                warn!("skipping `{}`: {reason}", row.sample_id);
                skipped.push((row.sample_id.clone(), reason));
            }
        }
    }
    if skipped.len() * 100 > rows.len() {
        return Err(KbError::Build(format!(
            "{} of {} rows failed to embed (limit 1%)",
            skipped.len(),
            rows.len()
        )));
    }
    let dim = dim.ok_or_else(|| KbError::Build("no row embedded successfully".into()))?;
    Ok(BuildReport {
        kb: KnowledgeBase::new(embedder_id, dim, entries)?,
        skipped,
    })
}

/// Builds a knowledge base from the manifest's training rows.
pub fn build(manifest: &LabeledManifest, embedder: &ModelHandle) -> Result<BuildReport, KbError> {
    if !embedder.supports_embedding() {
        return Err(KbError::Build(format!(
            "model `{}` has no embedding layer",
            embedder.id()
        )));
    }
    let rows = manifest.rows_for(Split::Train);
    build_with(&rows, embedder.id(), |row| {
        let bytes = std::fs::read(&row.path).map_err(|e| format!("{}: {e}", row.path.display()))?;
        let tensor = preprocess(&bytes, embedder.config()).map_err(|e| e.to_string())?;
        embedder.embed(&tensor).map_err(|e| e.to_string())
    })
}
