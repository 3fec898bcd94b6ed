//! A tiny two-class ONNX classifier generated in code.
//!
//! The graph average-pools the input to a 4x4 grid, flattens it, applies a
//! dense layer with ReLU (exposed as `embedding`) and a final dense layer
//! producing two logits (`logits`). Hidden unit 0 is the mean pooled
//! intensity and drives the positive logit, so brighter images score as
//! positive; the remaining units carry seeded pseudo-random weights. Used by
//! tests, the demo fixtures and the end-to-end dry run.

use std::path::Path;

use prost::Message;
use tract_onnx::pb;

pub const INPUT_NAME: &str = "image";
pub const EMBEDDING_NAME: &str = "embedding";
pub const OUTPUT_NAME: &str = "logits";

const GRID: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureClassifier {
    /// Square input side in pixels; must be a positive multiple of 4.
    pub input_size: usize,
    pub hidden: usize,
    pub seed: u64,
    /// Append a softmax so the graph emits probabilities instead of logits.
    pub softmax_output: bool,
    /// Gain on the brightness unit; larger values give more confident outputs.
    pub gain: f32,
}

impl Default for FixtureClassifier {
    fn default() -> Self {
        Self {
            input_size: 32,
            hidden: 16,
            seed: 7,
            softmax_output: false,
            gain: 12.0,
        }
    }
}

pub(crate) struct SplitMix(pub(crate) u64);

impl SplitMix {
    pub(crate) fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Uniform in [-1, 1).
    pub(crate) fn next_signed(&mut self) -> f32 {
        ((self.next_u64() >> 40) as f32 / (1u64 << 24) as f32) * 2.0 - 1.0
    }
}

fn tensor(name: &str, dims: &[usize], values: Vec<f32>) -> pb::TensorProto {
    pb::TensorProto {
        name: name.into(),
        dims: dims.iter().map(|d| *d as i64).collect(),
        data_type: pb::tensor_proto::DataType::Float as i32,
        float_data: values,
        ..Default::default()
    }
}

fn ints_attr(name: &str, values: &[i64]) -> pb::AttributeProto {
    pb::AttributeProto {
        name: name.into(),
        r#type: pb::attribute_proto::AttributeType::Ints as i32,
        ints: values.to_vec(),
        ..Default::default()
    }
}

fn int_attr(name: &str, value: i64) -> pb::AttributeProto {
    pb::AttributeProto {
        name: name.into(),
        r#type: pb::attribute_proto::AttributeType::Int as i32,
        i: value,
        ..Default::default()
    }
}

fn node(op: &str, name: &str, inputs: &[&str], attrs: Vec<pb::AttributeProto>) -> pb::NodeProto {
    pb::NodeProto {
        op_type: op.into(),
        name: name.into(),
        input: inputs.iter().map(|s| s.to_string()).collect(),
        output: vec![name.to_string()],
        attribute: attrs,
        ..Default::default()
    }
}

fn value_info(name: &str, dims: &[usize]) -> pb::ValueInfoProto {
    use pb::tensor_shape_proto::{dimension, Dimension};
    let shape = pb::TensorShapeProto {
        dim: dims
            .iter()
            .map(|d| Dimension {
                value: Some(dimension::Value::DimValue(*d as i64)),
                ..Default::default()
            })
            .collect(),
    };
    pb::ValueInfoProto {
        name: name.into(),
        r#type: Some(pb::TypeProto {
            value: Some(pb::type_proto::Value::TensorType(pb::type_proto::Tensor {
                elem_type: pb::tensor_proto::DataType::Float as i32,
                shape: Some(shape),
            })),
            ..Default::default()
        }),
        ..Default::default()
    }
}

impl FixtureClassifier {
    pub fn to_onnx_bytes(&self) -> Vec<u8> {
        assert!(
            self.input_size >= GRID && self.input_size.is_multiple_of(GRID),
            "fixture input size must be a positive multiple of {GRID}"
        );
        assert!(self.hidden >= 1, "fixture needs at least one hidden unit");
        let kernel = (self.input_size / GRID) as i64;
        let flat = 3 * GRID * GRID;
        let hidden = self.hidden;
        let mut rng = SplitMix(self.seed);

        // w1 is [flat, hidden] row-major; unit 0 averages every pooled cell
        let mut w1 = vec![0f32; flat * hidden];
        for i in 0..flat {
            for j in 0..hidden {
                w1[i * hidden + j] = if j == 0 {
                    1.0 / flat as f32
                } else {
                    rng.next_signed() * 0.5
                };
            }
        }
        let b1: Vec<f32> = (0..hidden)
            .map(|j| if j == 0 { 0.0 } else { rng.next_signed() * 0.1 })
            .collect();
        // w2 is [hidden, 2]; column 0 is the positive class
        let mut w2 = vec![0f32; hidden * 2];
        w2[0] = self.gain;
        w2[1] = -self.gain;
        for j in 1..hidden {
            let v = rng.next_signed() * 0.05;
            w2[j * 2] = v;
            w2[j * 2 + 1] = -v;
        }
        let b2 = vec![-0.5 * self.gain, 0.5 * self.gain];

        let mut nodes = vec![
            node(
                "AveragePool",
                "pooled",
                &[INPUT_NAME],
                vec![
                    ints_attr("kernel_shape", &[kernel, kernel]),
                    ints_attr("strides", &[kernel, kernel]),
                ],
            ),
            node("Flatten", "flat", &["pooled"], vec![int_attr("axis", 1)]),
            node("Gemm", "fc1", &["flat", "w1", "b1"], vec![]),
            node("Relu", EMBEDDING_NAME, &["fc1"], vec![]),
        ];
        let final_name = if self.softmax_output { "fc2" } else { OUTPUT_NAME };
        nodes.push(node("Gemm", final_name, &[EMBEDDING_NAME, "w2", "b2"], vec![]));
        if self.softmax_output {
            nodes.push(node("Softmax", OUTPUT_NAME, &["fc2"], vec![int_attr("axis", 1)]));
        }

        let graph = pb::GraphProto {
            name: "fixture_classifier".into(),
            node: nodes,
            initializer: vec![
                tensor("w1", &[flat, hidden], w1),
                tensor("b1", &[hidden], b1),
                tensor("w2", &[hidden, 2], w2),
                tensor("b2", &[2], b2),
            ],
            input: vec![value_info(
                INPUT_NAME,
                &[1, 3, self.input_size, self.input_size],
            )],
            output: vec![value_info(OUTPUT_NAME, &[1, 2])],
            ..Default::default()
        };
        let model = pb::ModelProto {
            ir_version: 7,
            producer_name: "cxrbench-fixture".into(),
            opset_import: vec![pb::OperatorSetIdProto {
                domain: String::new(),
                version: 13,
            }],
            graph: Some(graph),
            ..Default::default()
        };
        model.encode_to_vec()
    }

    pub fn write(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        std::fs::write(path, self.to_onnx_bytes())
    }
}
