#![no_main]

use cxrbench::runtime::{preprocess, LocalModelConfig};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let config = LocalModelConfig {
        id: "fuzz".into(),
        model_path: "unused.onnx".into(),
        input_width: 16,
        input_height: 16,
        channel_order: Default::default(),
        mean: [0.0; 3],
        scale: [1.0; 3],
        positive_class_index: 0,
        embedding_layer: None,
        model_size_mb: None,
    };
    if let Ok(t) = preprocess(data, &config) {
        assert_eq!(t.shape(), (3, 16, 16));
    }
});
