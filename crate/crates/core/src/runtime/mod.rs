//! Local discriminative classifiers exported as ONNX graphs.

pub mod fixture;
mod preprocess;

pub use preprocess::{preprocess, InputTensor};

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tract_onnx::prelude::*;

use crate::diagnosis::{Diagnosis, DiagnosisError};

/// Bytes per MB when comparing declared and on-disk model sizes.
pub const BYTES_PER_MB: f64 = 1024.0 * 1024.0;

/// Output sums further than this from 1 are treated as logits.
pub const NORMALISED_OUTPUT_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("model file not found: {0}")]
    NotFound(PathBuf),
    #[error("model `{model_id}` config error: {reason}")]
    Config { model_id: String, reason: String },
    #[error("input format error: {0}")]
    InputFormat(String),
    #[error("model `{model_id}` backend error: {reason}")]
    Backend { model_id: String, reason: String },
    #[error("model `{0}` has no embedding output configured")]
    Capability(String),
    #[error("io error reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelOrder {
    #[default]
    Rgb,
    Bgr,
}

fn unit_scale() -> [f32; 3] {
    [1.0; 3]
}

/// How to load, feed and interpret one local classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalModelConfig {
    pub id: String,
    pub model_path: PathBuf,
    pub input_width: u32,
    pub input_height: u32,
    #[serde(default)]
    pub channel_order: ChannelOrder,
    /// Per-channel value subtracted from pixels scaled to [0, 1].
    #[serde(default)]
    pub mean: [f32; 3],
    /// Per-channel multiplier applied after mean subtraction.
    #[serde(default = "unit_scale")]
    pub scale: [f32; 3],
    pub positive_class_index: usize,
    /// Intermediate output exposed as the embedding, usually the penultimate
    /// dense layer.
    #[serde(default)]
    pub embedding_layer: Option<String>,
    /// Checked against the file size; measured from disk when absent.
    #[serde(default)]
    pub model_size_mb: Option<f64>,
}

impl LocalModelConfig {
    fn config_error(&self, reason: impl Into<String>) -> RuntimeError {
        RuntimeError::Config {
            model_id: self.id.clone(),
            reason: reason.into(),
        }
    }

    pub fn validate(&self) -> Result<(), RuntimeError> {
        if self.input_width == 0 || self.input_height == 0 {
            return Err(self.config_error("input dimensions must be > 0"));
        }
        if self.scale.iter().chain(self.mean.iter()).any(|v| !v.is_finite()) {
            return Err(self.config_error("non-finite normalisation constants"));
        }
        if let Some(mb) = self.model_size_mb {
            if !(mb > 0.0) {
                return Err(self.config_error("model_size_mb must be > 0"));
            }
        }
        Ok(())
    }
}

/// Activations of an embedding layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub embedder_id: String,
    pub values: Vec<f32>,
}

#[derive(Debug, Error, PartialEq)]
pub enum EmbeddingError {
    #[error("embedding is empty")]
    Empty,
    #[error("embedding has a non-finite entry at {0}")]
    NonFinite(usize),
    #[error("embedding has zero norm")]
    ZeroNorm,
}

impl EmbeddingVector {
    pub fn new(embedder_id: impl Into<String>, values: Vec<f32>) -> Result<Self, EmbeddingError> {
        if values.is_empty() {
            return Err(EmbeddingError::Empty);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite(i));
        }
        if values.iter().all(|v| *v == 0.0) {
            return Err(EmbeddingError::ZeroNorm);
        }
        Ok(Self {
            embedder_id: embedder_id.into(),
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

type Plan = Arc<TypedRunnableModel>;

/// A loaded classifier. Immutable and shareable across threads.
#[derive(Clone)]
pub struct ModelHandle {
    config: LocalModelConfig,
    plan: Plan,
    output_arity: usize,
    embedding_dim: Option<usize>,
    model_size_mb: f64,
}

impl std::fmt::Debug for ModelHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelHandle")
            .field("id", &self.config.id)
            .field("output_arity", &self.output_arity)
            .field("embedding_dim", &self.embedding_dim)
            .finish()
    }
}

fn concrete_len(fact: &TypedFact) -> Option<usize> {
    fact.shape
        .as_concrete()
        .map(|dims| dims.iter().skip(1).product::<usize>().max(1))
}

/// Loads and optimises the model described by `config`.
pub fn load_model(config: &LocalModelConfig) -> Result<ModelHandle, RuntimeError> {
    config.validate()?;
    let path = &config.model_path;
    if !path.is_file() {
        return Err(RuntimeError::NotFound(path.clone()));
    }
    let bytes = std::fs::read(path).map_err(|source| RuntimeError::Io {
        path: path.clone(),
        source,
    })?;
    let on_disk_mb = bytes.len() as f64 / BYTES_PER_MB;
    if let Some(declared) = config.model_size_mb {
        if (declared - on_disk_mb).abs() > 0.01 * on_disk_mb {
            return Err(config.config_error(format!(
                "declared size {declared} MB differs from on-disk {on_disk_mb:.6} MB by more than 1%"
            )));
        }
    }
    let backend = |e: TractError| config.config_error(format!("{e:#}"));

    let mut model = tract_onnx::onnx()
        .model_for_read(&mut bytes.as_slice())
        .map_err(|e| config.config_error(format!("not a valid ONNX graph: {e:#}")))?;
    let shape = [
        1,
        3,
        config.input_height as usize,
        config.input_width as usize,
    ];
    model
        .set_input_fact(0, f32::fact(shape).into())
        .map_err(backend)?;

    if let Some(layer) = &config.embedding_layer {
        let classifier_output = model.output_outlets().map_err(backend)?[0];
        let classifier_name = model
            .outlet_label(classifier_output)
            .map(str::to_string)
            .unwrap_or_else(|| model.node(classifier_output.node).name.clone());
        model
            .select_outputs_by_name([classifier_name.as_str(), layer.as_str()])
            .map_err(|e| config.config_error(format!("embedding layer `{layer}`: {e:#}")))?;
    }

    let typed = model
        .into_optimized()
        .map_err(|e| config.config_error(format!("input shape {shape:?} rejected: {e:#}")))?;
    let output_arity = concrete_len(typed.output_fact(0).map_err(backend)?)
        .ok_or_else(|| config.config_error("classifier output shape is not concrete"))?;
    if output_arity != 2 {
        return Err(config.config_error(format!(
            "expected a two-class output, found arity {output_arity}"
        )));
    }
    if config.positive_class_index >= output_arity {
        return Err(config.config_error(format!(
            "positive_class_index {} outside output arity {output_arity}",
            config.positive_class_index
        )));
    }
    let embedding_dim = match config.embedding_layer {
        Some(_) => Some(
            concrete_len(typed.output_fact(1).map_err(backend)?)
                .ok_or_else(|| config.config_error("embedding shape is not concrete"))?,
        ),
        None => None,
    };
    let plan = typed.into_runnable().map_err(backend)?;
    Ok(ModelHandle {
        config: config.clone(),
        plan,
        output_arity,
        embedding_dim,
        model_size_mb: config.model_size_mb.unwrap_or(on_disk_mb),
    })
}

impl ModelHandle {
    pub fn id(&self) -> &str {
        &self.config.id
    }

    pub fn config(&self) -> &LocalModelConfig {
        &self.config
    }

    /// `(channels, height, width)` expected by the graph.
    pub fn input_shape(&self) -> (usize, usize, usize) {
        (
            3,
            self.config.input_height as usize,
            self.config.input_width as usize,
        )
    }

    pub fn output_arity(&self) -> usize {
        self.output_arity
    }

    pub fn supports_embedding(&self) -> bool {
        self.embedding_dim.is_some()
    }

    pub fn embedding_dim(&self) -> Option<usize> {
        self.embedding_dim
    }

    pub fn model_size_mb(&self) -> f64 {
        self.model_size_mb
    }

    fn backend_error(&self, reason: impl Into<String>) -> RuntimeError {
        RuntimeError::Backend {
            model_id: self.config.id.clone(),
            reason: reason.into(),
        }
    }

    fn execute(&self, tensor: &InputTensor) -> Result<TVec<TValue>, RuntimeError> {
        if tensor.shape() != self.input_shape() {
            return Err(self.backend_error(format!(
                "tensor shape {:?} does not match model input {:?}",
                tensor.shape(),
                self.input_shape()
            )));
        }
        let (c, h, w) = tensor.shape();
        let input = Tensor::from_shape(&[1, c, h, w], tensor.data())
            .map_err(|e| self.backend_error(format!("{e:#}")))?;
        self.plan
            .run(tvec!(input.into()))
            .map_err(|e| self.backend_error(format!("{e:#}")))
    }

    fn output_values(&self, value: &TValue) -> Result<Vec<f32>, RuntimeError> {
        value
            .try_as_plain_ram()
            .and_then(|p| p.as_slice::<f32>())
            .map(<[f32]>::to_vec)
            .map_err(|e| self.backend_error(format!("{e:#}")))
    }

    /// Runs the classifier and maps the positive class to a [`Diagnosis`].
    pub fn classify(&self, tensor: &InputTensor) -> Result<Diagnosis, RuntimeError> {
        let outputs = self.execute(tensor)?;
        let raw = self.output_values(&outputs[0])?;
        diagnosis_from_output(&raw, self.config.positive_class_index)
            .map_err(|e| self.backend_error(e.to_string()))
    }

    /// Returns the embedding layer's activations, flattened.
    pub fn embed(&self, tensor: &InputTensor) -> Result<EmbeddingVector, RuntimeError> {
        if !self.supports_embedding() {
            return Err(RuntimeError::Capability(self.config.id.clone()));
        }
        let outputs = self.execute(tensor)?;
        let values = self.output_values(&outputs[1])?;
        EmbeddingVector::new(self.config.id.clone(), values)
            .map_err(|e| self.backend_error(e.to_string()))
    }
}

/// Converts raw classifier output into class probabilities, applying softmax
/// only when the output is not already a probability vector.
pub fn probabilities_from_output(raw: &[f32]) -> Vec<f64> {
    let values: Vec<f64> = raw.iter().map(|v| *v as f64).collect();
    let sum: f64 = values.iter().sum();
    let in_range = values.iter().all(|v| (0.0..=1.0).contains(v));
    if in_range && (sum - 1.0).abs() <= NORMALISED_OUTPUT_TOLERANCE {
        return values;
    }
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = values.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn diagnosis_from_output(raw: &[f32], positive_index: usize) -> Result<Diagnosis, DiagnosisError> {
    let probs = probabilities_from_output(raw);
    let p_positive = probs.get(positive_index).copied().unwrap_or(f64::NAN);
    let p_negative: f64 = probs
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != positive_index)
        .map(|(_, p)| p)
        .sum();
    // pass-through outputs may be off by up to the detection tolerance
    let total = p_positive + p_negative;
    if (total - 1.0).abs() > crate::diagnosis::LOCAL_SUM_TOLERANCE && total > 0.0 {
        return Diagnosis::new(p_positive / total, p_negative / total, crate::diagnosis::LOCAL_SUM_TOLERANCE);
    }
    Diagnosis::new(p_positive, p_negative, crate::diagnosis::LOCAL_SUM_TOLERANCE)
}

/// Size of a file in MB.
pub fn file_size_mb(path: &Path) -> std::io::Result<f64> {
    Ok(std::fs::metadata(path)?.len() as f64 / BYTES_PER_MB)
}
