//! Run files: the declarative benchmark matrix.
//!
//! ```toml
//! [run]
//! manifest = "manifest.csv"
//! records_dir = "records"
//! profiles = "profiles.toml"   # built-in profiles when omitted
//! test_per_class = 200         # all test rows when omitted
//!
//! [[model]]
//! id = "fixture"
//! model_path = "models/fixture.onnx"
//! input_width = 32
//! input_height = 32
//! positive_class_index = 0
//! embedding_layer = "embedding"
//!
//! [[endpoint]]
//! id = "mock"
//! base_url = "http://127.0.0.1:8080/v1"
//! model = "gpt-4.1-nano"
//!
//! [[kb]]
//! id = "fixture-kb"
//! path = "kb/fixture.cxkb"
//! embedder = "fixture"
//!
//! [[config]]
//! id = "nano-kb"
//! kind = "llm_with_kb"
//! endpoint = "mock"
//! kb = "fixture-kb"
//! remote_profile = "gpt-4.1-nano"
//! memory = { app_size_mb = 36.8, instance_total_mb = 100 }
//! ```
//!
//! Relative paths resolve against the run file's directory.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::carbon::{MemoryContext, ProfileSet, ProfileSetError};
use crate::kb::DEFAULT_TOP_K;
use crate::llm::{EndpointConfig, PromptTemplate};
use crate::metrics::{TimeBasis, DEFAULT_BINS, DEFAULT_THRESHOLD};
use crate::runtime::LocalModelConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading run file: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing run file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config `{config_id}`: {reason}")]
    Invalid { config_id: String, reason: String },
    #[error("duplicate {kind} id `{id}`")]
    Duplicate { kind: &'static str, id: String },
    #[error(transparent)]
    Profiles(#[from] ProfileSetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfigKind {
    Local,
    Llm,
    LlmWithKb,
}

impl ConfigKind {
    pub fn is_remote(self) -> bool {
        !matches!(self, ConfigKind::Local)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimingMode {
    #[default]
    Sequential,
    /// Several samples in flight at once; throughput rather than latency.
    Concurrent,
}

/// Memory sizes for the memory-scaled footprint. For local configurations
/// `model_size_mb` defaults to the model file size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemorySpec {
    pub app_size_mb: f64,
    pub instance_total_mb: f64,
    #[serde(default)]
    pub model_size_mb: Option<f64>,
}

fn default_app_profile() -> String {
    "app".into()
}
fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}
fn default_bins() -> usize {
    DEFAULT_BINS
}
fn default_records_dir() -> PathBuf {
    PathBuf::from("records")
}
fn default_k() -> usize {
    DEFAULT_TOP_K
}
fn default_template() -> String {
    PromptTemplate::radiologist_detailed().id
}
fn default_in_flight() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub manifest: PathBuf,
    #[serde(default = "default_records_dir")]
    pub records_dir: PathBuf,
    #[serde(default)]
    pub profiles: Option<PathBuf>,
    #[serde(default)]
    pub test_per_class: Option<usize>,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_bins")]
    pub bins: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KbSpec {
    pub id: String,
    pub path: PathBuf,
    /// Id of the local model whose embedding layer built the KB.
    pub embedder: String,
    #[serde(default = "default_k")]
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub id: String,
    pub kind: ConfigKind,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub kb: Option<String>,
    #[serde(default = "default_template")]
    pub template: String,
    #[serde(default = "default_app_profile")]
    pub app_profile: String,
    #[serde(default)]
    pub remote_profile: Option<String>,
    pub memory: MemorySpec,
    #[serde(default)]
    pub timing_mode: TimingMode,
    #[serde(default)]
    pub remote_time_basis: TimeBasis,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunFile {
    pub run: RunSection,
    #[serde(default, rename = "model")]
    pub models: Vec<LocalModelConfig>,
    #[serde(default, rename = "endpoint")]
    pub endpoints: Vec<EndpointConfig>,
    #[serde(default, rename = "kb")]
    pub kbs: Vec<KbSpec>,
    #[serde(default, rename = "template")]
    pub templates: Vec<PromptTemplate>,
    #[serde(default, rename = "config")]
    pub configs: Vec<BenchConfig>,
    /// Directory relative paths resolve against; not part of the file.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn unique<'a>(kind: &'static str, ids: impl Iterator<Item = &'a str>) -> Result<(), ConfigError> {
    let mut seen = BTreeSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(ConfigError::Duplicate {
                kind,
                id: id.to_string(),
            });
        }
    }
    Ok(())
}

impl RunFile {
    /// Parses run-file text without touching the filesystem.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut file: RunFile = toml::from_str(text)?;
        file.base_dir = base_dir.to_path_buf();
        file.validate()?;
        Ok(file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.resolve(&self.run.manifest)
    }

    pub fn records_dir(&self) -> PathBuf {
        self.resolve(&self.run.records_dir)
    }

    pub fn profiles(&self) -> Result<ProfileSet, ConfigError> {
        Ok(match &self.run.profiles {
            Some(p) => ProfileSet::load(self.resolve(p))?,
            None => ProfileSet::builtin(),
        })
    }

    pub fn model(&self, id: &str) -> Option<&LocalModelConfig> {
        self.models.iter().find(|m| m.id == id)
    }

    /// Model config with its path resolved.
    pub fn resolved_model(&self, id: &str) -> Option<LocalModelConfig> {
        self.model(id).map(|m| LocalModelConfig {
            model_path: self.resolve(&m.model_path),
            ..m.clone()
        })
    }

    pub fn endpoint(&self, id: &str) -> Option<&EndpointConfig> {
        self.endpoints.iter().find(|e| e.id == id)
    }

    pub fn kb(&self, id: &str) -> Option<&KbSpec> {
        self.kbs.iter().find(|k| k.id == id)
    }

    /// Run-file templates first, then the built-in ones.
    pub fn template(&self, id: &str) -> Option<PromptTemplate> {
        self.templates
            .iter()
            .cloned()
            .chain(PromptTemplate::builtin())
            .find(|t| t.id == id)
    }

    pub fn config(&self, id: &str) -> Option<&BenchConfig> {
        self.configs.iter().find(|c| c.id == id)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        unique("model", self.models.iter().map(|m| m.id.as_str()))?;
        unique("endpoint", self.endpoints.iter().map(|e| e.id.as_str()))?;
        unique("kb", self.kbs.iter().map(|k| k.id.as_str()))?;
        unique("template", self.templates.iter().map(|t| t.id.as_str()))?;
        unique("config", self.configs.iter().map(|c| c.id.as_str()))?;
        let run_err = |reason: String| ConfigError::Invalid {
            config_id: "[run]".into(),
            reason,
        };
        if !(0.0..=1.0).contains(&self.run.threshold) {
            return Err(run_err(format!("threshold {} outside [0, 1]", self.run.threshold)));
        }
        if self.run.bins == 0 {
            return Err(run_err("bins must be >= 1".into()));
        }
        for t in &self.templates {
            t.validate().map_err(|e| run_err(e.to_string()))?;
        }
        for m in &self.models {
            m.validate().map_err(|e| run_err(e.to_string()))?;
        }
        for k in &self.kbs {
            if self.model(&k.embedder).is_none() {
                return Err(run_err(format!("kb `{}` names unknown embedder `{}`", k.id, k.embedder)));
            }
            if k.k == 0 {
                return Err(run_err(format!("kb `{}` needs k >= 1", k.id)));
            }
        }
        for c in &self.configs {
            self.validate_config(c)?;
        }
        Ok(())
    }

    fn validate_config(&self, c: &BenchConfig) -> Result<(), ConfigError> {
        let fail = |reason: String| {
            Err(ConfigError::Invalid {
                config_id: c.id.clone(),
                reason,
            })
        };
        if c.max_in_flight == 0 {
            return fail("max_in_flight must be >= 1".into());
        }
        match c.kind {
            ConfigKind::Local => {
                let Some(model) = &c.model else {
                    return fail("local configs need `model`".into());
                };
                if self.model(model).is_none() {
                    return fail(format!("unknown model `{model}`"));
                }
                if c.endpoint.is_some() || c.kb.is_some() || c.remote_profile.is_some() {
                    return fail("local configs take no endpoint, kb or remote_profile".into());
                }
                if let Some(mb) = c.memory.model_size_mb {
                    if !(mb > 0.0) {
                        return fail("local configs need model_size_mb > 0".into());
                    }
                }
            }
            ConfigKind::Llm | ConfigKind::LlmWithKb => {
                let Some(endpoint) = &c.endpoint else {
                    return fail("llm configs need `endpoint`".into());
                };
                if self.endpoint(endpoint).is_none() {
                    return fail(format!("unknown endpoint `{endpoint}`"));
                }
                if c.remote_profile.is_none() {
                    return fail("llm configs need `remote_profile`".into());
                }
                if self.template(&c.template).is_none() {
                    return fail(format!("unknown template `{}`", c.template));
                }
                match (c.kind, &c.kb) {
                    (ConfigKind::LlmWithKb, None) => return fail("llm_with_kb needs `kb`".into()),
                    (ConfigKind::LlmWithKb, Some(kb)) if self.kb(kb).is_none() => {
                        return fail(format!("unknown kb `{kb}`"))
                    }
                    (ConfigKind::Llm, Some(_)) => return fail("plain llm configs take no kb".into()),
                    _ => {}
                }
            }
        }
        Ok(())
    }

    /// Memory context for a configuration. Remote kinds always have a zero
    /// model size; local kinds fall back to `measured_model_mb`.
    pub fn memory_context(&self, c: &BenchConfig, measured_model_mb: Option<f64>) -> Result<MemoryContext, ConfigError> {
        let model_size_mb = if c.kind.is_remote() {
            if c.memory.model_size_mb.is_some_and(|m| m != 0.0) {
                warn!("config `{}`: model_size_mb ignored for a remote model", c.id);
            }
            0.0
        } else {
            match c.memory.model_size_mb.or(measured_model_mb) {
                Some(mb) if mb > 0.0 => mb,
                _ => {
                    return Err(ConfigError::Invalid {
                        config_id: c.id.clone(),
                        reason: "local configs need model_size_mb > 0".into(),
                    })
                }
            }
        };
        let mem = MemoryContext {
            app_size_mb: c.memory.app_size_mb,
            model_size_mb,
            instance_total_mb: c.memory.instance_total_mb,
        };
        mem.validate().map_err(|e| ConfigError::Invalid {
            config_id: c.id.clone(),
            reason: e.to_string(),
        })?;
        Ok(mem)
    }
}
