use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use log::{info, warn};
use thiserror::Error;

use super::config::{BenchConfig, ConfigError, ConfigKind, RunFile, TimingMode};
use super::manifest::{LabeledManifest, ManifestError, ManifestRow};
use super::records::{records_path, RecordError, RecordWriter};
use crate::carbon::{footprint, scale_by_fraction, CarbonError, InfrastructureProfile, ProfileSet};
use crate::diagnosis::Diagnosis;
use crate::kb::{self, KnowledgeBase};
use crate::llm::{
    build_prompt, estimate_text_tokens, interpret_response, verify_image_delivery, DeliveryVerdict, LlmClient,
    LlmError, Outcome, PromptTemplate,
};
use crate::metrics::{Anomaly, CarbonAttribution, InferenceRecord, TimeBasis};
use crate::runtime::{load_model, preprocess, ModelHandle, RuntimeError};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error("loading knowledge base: {0}")]
    Kb(#[from] kb::store::StoreError),
    #[error(transparent)]
    Records(#[from] RecordError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Carbon(#[from] CarbonError),
    #[error("config `{config_id}`: {reason}")]
    Setup { config_id: String, reason: String },
    #[error("config `{config_id}` aborted after {consecutive} consecutive transport failures ({total} test rows)")]
    Aborted {
        config_id: String,
        consecutive: usize,
        total: usize,
    },
}

/// What one configuration's run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub config_id: String,
    pub records_path: PathBuf,
    pub test_rows: usize,
    /// Rows already present from an earlier, interrupted run.
    pub resumed: usize,
    pub written: usize,
    pub anomalies: usize,
}

/// Carbon for one record from its timers.
pub fn attribute_carbon(
    app: &InfrastructureProfile,
    remote: Option<(&InfrastructureProfile, TimeBasis)>,
    end_to_end_ms: f64,
    model_exec_ms: f64,
    memory_fraction: f64,
) -> Result<CarbonAttribution, CarbonError> {
    let app_mg = footprint(app, end_to_end_ms / 1000.0)?;
    let (remote_profile, round_trip, end_to_end, basis) = match remote {
        Some((profile, basis)) => (
            Some(profile.name.clone()),
            Some(footprint(profile, model_exec_ms / 1000.0)?),
            Some(footprint(profile, end_to_end_ms / 1000.0)?),
            Some(basis),
        ),
        None => (None, None, None, None),
    };
    let remote_mg = match basis {
        Some(TimeBasis::RoundTrip) => round_trip.unwrap_or(0.0),
        Some(TimeBasis::EndToEnd) => end_to_end.unwrap_or(0.0),
        None => 0.0,
    };
    let total_mg = app_mg + remote_mg;
    Ok(CarbonAttribution {
        app_profile: app.name.clone(),
        app_mg,
        remote_profile,
        remote_mg_round_trip: round_trip,
        remote_mg_end_to_end: end_to_end,
        remote_time_basis: basis,
        total_mg,
        memory_fraction,
        memory_scaled_mg_per_mb: scale_by_fraction(total_mg, memory_fraction)?,
    })
}

/// Monotonic wall clock anchored at construction.
struct Clock {
    base_us: u64,
    base: Instant,
}

impl Clock {
    fn new() -> Self {
        let base_us = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_micros() as u64)
            .unwrap_or(0);
        Self {
            base_us,
            base: Instant::now(),
        }
    }

    fn at(&self, t: Instant) -> u64 {
        self.base_us + t.duration_since(self.base).as_micros() as u64
    }
}

#[derive(Default)]
struct SampleOutcome {
    diagnosis: Option<Diagnosis>,
    anomaly: Option<(Anomaly, String)>,
    round_trip_ms: Option<f64>,
    prompt_tokens: Option<u64>,
    completion_tokens: Option<u64>,
}

impl SampleOutcome {
    fn anomaly(kind: Anomaly, detail: impl Into<String>) -> Self {
        Self {
            anomaly: Some((kind, detail.into())),
            ..Self::default()
        }
    }
}

struct Retrieval {
    kb: KnowledgeBase,
    embedder: ModelHandle,
    k: usize,
}

enum Engine {
    Local(ModelHandle),
    Llm {
        client: LlmClient,
        template: PromptTemplate,
        retrieval: Option<Retrieval>,
    },
}

fn local_infer(model: &ModelHandle, row: &ManifestRow) -> Result<Diagnosis, String> {
    let bytes = std::fs::read(&row.path).map_err(|e| format!("{}: {e}", row.path.display()))?;
    let tensor = preprocess(&bytes, model.config()).map_err(|e| e.to_string())?;
    model.classify(&tensor).map_err(|e| e.to_string())
}

impl Engine {
    fn infer(&self, row: &ManifestRow) -> SampleOutcome {
        match self {
            Engine::Local(model) => match local_infer(model, row) {
                Ok(d) => SampleOutcome {
                    diagnosis: Some(d),
                    ..SampleOutcome::default()
                },
                Err(e) => SampleOutcome::anomaly(Anomaly::InferenceError, e),
            },
            Engine::Llm {
                client,
                template,
                retrieval,
            } => llm_infer(client, template, retrieval.as_ref(), row),
        }
    }
}

fn llm_infer(
    client: &LlmClient,
    template: &PromptTemplate,
    retrieval: Option<&Retrieval>,
    row: &ManifestRow,
) -> SampleOutcome {
    let bytes = match std::fs::read(&row.path) {
        Ok(b) => b,
        Err(e) => return SampleOutcome::anomaly(Anomaly::InferenceError, format!("{}: {e}", row.path.display())),
    };
    let context = match retrieval {
        None => None,
        Some(r) => {
            let snippet = preprocess(&bytes, r.embedder.config())
                .and_then(|t| r.embedder.embed(&t))
                .map_err(|e| e.to_string())
                .and_then(|q| r.kb.retrieve(&q, r.k).map_err(|e| e.to_string()));
            match snippet {
                Ok(s) => Some(s),
                Err(e) => return SampleOutcome::anomaly(Anomaly::InferenceError, e),
            }
        }
    };
    let payload = match build_prompt(template, &bytes, context.as_ref()) {
        Ok(p) => p,
        Err(e) => return SampleOutcome::anomaly(Anomaly::InferenceError, e.to_string()),
    };
    let record = match client.send(&payload) {
        Ok(r) => r,
        Err(e) => return SampleOutcome::anomaly(Anomaly::TransportError, e.to_string()),
    };
    let mut outcome = SampleOutcome {
        round_trip_ms: Some(record.round_trip_ms),
        prompt_tokens: record.prompt_tokens,
        completion_tokens: record.completion_tokens,
        ..SampleOutcome::default()
    };
    let estimate = estimate_text_tokens(&payload.system_text);
    let floor = client.endpoint().image_token_floor;
    if verify_image_delivery(&record, estimate, floor) == DeliveryVerdict::SuspectNoImage {
        outcome.anomaly = Some((
            Anomaly::SuspectNoImage,
            format!(
                "{} prompt tokens against a text-only estimate of {estimate} plus {floor} for the image",
                record.prompt_tokens.unwrap_or(0)
            ),
        ));
        return outcome;
    }
    match interpret_response(&record.raw_text) {
        Outcome::Scored(d) => outcome.diagnosis = Some(d),
        Outcome::Refusal => outcome.anomaly = Some((Anomaly::Refusal, record.raw_text)),
        Outcome::Unparseable(e) => outcome.anomaly = Some((Anomaly::ParseError, e.to_string())),
    }
    outcome
}

/// Everything fixed for one configuration's run.
struct Prepared<'a> {
    config: &'a BenchConfig,
    engine: Engine,
    app: InfrastructureProfile,
    remote: Option<InfrastructureProfile>,
    memory_fraction: f64,
    manifest_digest: String,
    clock: Clock,
}

impl Prepared<'_> {
    fn sample(&self, row: &ManifestRow) -> Result<InferenceRecord, RunError> {
        let start = Instant::now();
        let outcome = self.engine.infer(row);
        let end = Instant::now();
        let end_to_end_ms = end.duration_since(start).as_secs_f64() * 1000.0;
        let model_exec_ms = match self.config.kind {
            ConfigKind::Local => end_to_end_ms,
            _ => outcome.round_trip_ms.unwrap_or(0.0).min(end_to_end_ms),
        };
        let carbon = attribute_carbon(
            &self.app,
            self.remote.as_ref().map(|p| (p, self.config.remote_time_basis)),
            end_to_end_ms,
            model_exec_ms,
            self.memory_fraction,
        )?;
        let (anomaly, anomaly_detail) = match outcome.anomaly {
            Some((a, d)) => (Some(a), Some(d)),
            None => (None, None),
        };
        Ok(InferenceRecord {
            config_id: self.config.id.clone(),
            sample_id: row.sample_id.clone(),
            ground_truth: row.label,
            diagnosis: if anomaly.is_some() { None } else { outcome.diagnosis },
            anomaly,
            anomaly_detail,
            end_to_end_ms,
            model_exec_ms,
            started_unix_us: self.clock.at(start),
            ended_unix_us: self.clock.at(end),
            prompt_tokens: outcome.prompt_tokens,
            completion_tokens: outcome.completion_tokens,
            carbon: Some(carbon),
            manifest_digest: self.manifest_digest.clone(),
            template_id: self.config.kind.is_remote().then(|| self.config.template.clone()),
        })
    }
}

fn prepare<'a>(
    run_file: &RunFile,
    manifest: &LabeledManifest,
    profiles: &ProfileSet,
    config: &'a BenchConfig,
) -> Result<Prepared<'a>, RunError> {
    let setup = |reason: String| RunError::Setup {
        config_id: config.id.clone(),
        reason,
    };
    let app = profiles.get(&config.app_profile).map_err(|e| setup(e.to_string()))?.clone();
    let remote = match &config.remote_profile {
        Some(name) => Some(profiles.get(name).map_err(|e| setup(e.to_string()))?.clone()),
        None => None,
    };
    let load = |id: &str| -> Result<ModelHandle, RunError> {
        let cfg = run_file
            .resolved_model(id)
            .ok_or_else(|| setup(format!("unknown model `{id}`")))?;
        Ok(load_model(&cfg)?)
    };
    let (engine, measured_mb) = match config.kind {
        ConfigKind::Local => {
            let model = load(config.model.as_deref().unwrap_or_default())?;
            let mb = model.model_size_mb();
            (Engine::Local(model), Some(mb))
        }
        ConfigKind::Llm | ConfigKind::LlmWithKb => {
            let endpoint_id = config.endpoint.as_deref().unwrap_or_default();
            let endpoint = run_file
                .endpoint(endpoint_id)
                .ok_or_else(|| setup(format!("unknown endpoint `{endpoint_id}`")))?;
            let template = run_file
                .template(&config.template)
                .ok_or_else(|| setup(format!("unknown template `{}`", config.template)))?;
            let retrieval = match &config.kb {
                None => None,
                Some(kb_id) => {
                    let spec = run_file.kb(kb_id).ok_or_else(|| setup(format!("unknown kb `{kb_id}`")))?;
                    let kb = kb::store::load(run_file.resolve(&spec.path))?;
                    let embedder = load(&spec.embedder)?;
                    if kb.embedder_id() != embedder.id() {
                        return Err(setup(format!(
                            "kb `{kb_id}` was built with `{}`, not `{}`",
                            kb.embedder_id(),
                            embedder.id()
                        )));
                    }
                    if embedder.embedding_dim() != Some(kb.dim()) {
                        return Err(setup(format!(
                            "kb `{kb_id}` has dimension {} but the embedder produces {:?}",
                            kb.dim(),
                            embedder.embedding_dim()
                        )));
                    }
                    Some(Retrieval {
                        kb,
                        embedder,
                        k: spec.k,
                    })
                }
            };
            let engine = Engine::Llm {
                client: LlmClient::new(endpoint.clone())?,
                template,
                retrieval,
            };
            (engine, None)
        }
    };
    let memory = run_file.memory_context(config, measured_mb)?;
    Ok(Prepared {
        config,
        engine,
        app,
        remote,
        memory_fraction: memory.fraction(),
        manifest_digest: manifest.digest().to_string(),
        clock: Clock::new(),
    })
}

/// Consecutive transport failures tolerated: 10% of the test rows.
fn abort_after(test_rows: usize) -> usize {
    test_rows / 10
}

/// Runs one configuration over the manifest's test rows, appending to its
/// record file and skipping samples already recorded there.
pub fn run_config(
    run_file: &RunFile,
    manifest: &LabeledManifest,
    profiles: &ProfileSet,
    config_id: &str,
) -> Result<RunSummary, RunError> {
    let config = run_file.config(config_id).ok_or_else(|| RunError::Setup {
        config_id: config_id.to_string(),
        reason: "no such config in run file".into(),
    })?;
    let rows = manifest.balanced_test_rows(run_file.run.test_per_class);
    if rows.is_empty() {
        return Err(RunError::Manifest(ManifestError::Empty));
    }
    LabeledManifest::check_paths(rows.iter().copied())?;
    let prepared = prepare(run_file, manifest, profiles, config)?;
    let path = records_path(&run_file.records_dir(), &config.id);
    let mut writer = RecordWriter::open(&path, manifest.digest())?;
    let resumed = rows.iter().filter(|r| writer.is_done(&r.sample_id)).count();
    let pending: Vec<&ManifestRow> = rows.iter().copied().filter(|r| !writer.is_done(&r.sample_id)).collect();
    info!(
        "{}: {} test rows, {resumed} already recorded",
        config.id,
        rows.len()
    );

    let limit = abort_after(rows.len());
    let mut tally = Tally::default();
    let mut on_record = |record: InferenceRecord| -> Result<bool, RunError> {
        writer.append(&record)?;
        Ok(tally.push(&record, limit))
    };
    match config.timing_mode {
        TimingMode::Sequential => {
            for row in pending {
                if on_record(prepared.sample(row)?)? {
                    break;
                }
            }
        }
        TimingMode::Concurrent => run_concurrent(&prepared, &pending, config.max_in_flight, &mut on_record)?,
    }
    if tally.aborted {
        return Err(RunError::Aborted {
            config_id: config.id.clone(),
            consecutive: tally.consecutive,
            total: rows.len(),
        });
    }
    Ok(RunSummary {
        config_id: config.id.clone(),
        records_path: path,
        test_rows: rows.len(),
        resumed,
        written: tally.written,
        anomalies: tally.anomalies,
    })
}

#[derive(Default)]
struct Tally {
    written: usize,
    anomalies: usize,
    consecutive: usize,
    aborted: bool,
}

impl Tally {
    /// Returns true when the run should stop.
    fn push(&mut self, record: &InferenceRecord, limit: usize) -> bool {
        self.written += 1;
        if record.anomaly.is_some() {
            self.anomalies += 1;
        }
        if record.anomaly == Some(Anomaly::TransportError) {
            self.consecutive += 1;
            warn!(
                "{}: transport failure on `{}` ({} in a row)",
                record.config_id, record.sample_id, self.consecutive
            );
        } else {
            self.consecutive = 0;
        }
        self.aborted = self.consecutive > limit;
        self.aborted
    }
}

fn run_concurrent<F>(prepared: &Prepared<'_>, rows: &[&ManifestRow], workers: usize, on_record: &mut F) -> Result<(), RunError>
where
    F: FnMut(InferenceRecord) -> Result<bool, RunError>,
{
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let (tx, rx) = mpsc::channel::<Result<InferenceRecord, RunError>>();
    std::thread::scope(|scope| {
        for _ in 0..workers.min(rows.len()) {
            let tx = tx.clone();
            let (next, stop) = (&next, &stop);
            scope.spawn(move || {
                while !stop.load(Ordering::SeqCst) {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(row) = rows.get(i) else { break };
                    if tx.send(prepared.sample(row)).is_err() {
                        break;
                    }
                }
            });
        }
        drop(tx);
        let mut result = Ok(());
        for message in rx {
            if result.is_err() {
                continue;
            }
            match message.and_then(&mut *on_record) {
                Ok(false) => {}
                Ok(true) => stop.store(true, Ordering::SeqCst),
                Err(e) => {
                    stop.store(true, Ordering::SeqCst);
                    result = Err(e);
                }
            }
        }
        result
    })
}

/// Runs every configuration, or only those named in `only`.
pub fn run_all(
    run_file: &RunFile,
    manifest: &LabeledManifest,
    profiles: &ProfileSet,
    only: &[String],
) -> Result<Vec<RunSummary>, RunError> {
    let mut out = Vec::new();
    for c in &run_file.configs {
        if only.is_empty() || only.contains(&c.id) {
            out.push(run_config(run_file, manifest, profiles, &c.id)?);
        }
    }
    if out.is_empty() {
        return Err(RunError::Setup {
            config_id: only.join(","),
            reason: "no matching configs".into(),
        });
    }
    Ok(out)
}
