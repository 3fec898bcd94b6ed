//! Replays the checked-in fuzz seeds through the same entry points the fuzz
//! targets exercise, so regressions show up without a fuzzing toolchain.

use std::path::{Path, PathBuf};

use cxrbench::carbon::ProfileSet;
use cxrbench::harness::config::RunFile;
use cxrbench::harness::manifest::LabeledManifest;
use cxrbench::harness::records::parse_jsonl;
use cxrbench::kb::store::{decode, encode};
use cxrbench::llm::{decode_completion, interpret_response, parse_probabilities, Outcome};
use cxrbench::runtime::{preprocess, LocalModelConfig};

fn seeds(target: &str) -> Vec<(PathBuf, Vec<u8>)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fuzz/corpus").join(target);
    let mut out: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .map(|p| {
            let bytes = std::fs::read(&p).unwrap();
            (p, bytes)
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

fn text(bytes: &[u8]) -> &str {
    std::str::from_utf8(bytes).unwrap()
}

#[test]
fn answer_seeds() {
    let mut scored = 0;
    for (_, bytes) in seeds("parse_answer") {
        if let Ok(d) = parse_probabilities(text(&bytes)) {
            assert!((d.p_positive + d.p_negative - 1.0).abs() < 1e-9);
            scored += 1;
        }
        let _ = interpret_response(text(&bytes));
    }
    assert_eq!(scored, 2);
    let refusal = std::fs::read_to_string(
        Path::new(env!("CARGO_MANIFEST_DIR")).join("fuzz/corpus/parse_answer/refusal"),
    )
    .unwrap();
    assert_eq!(interpret_response(&refusal), Outcome::Refusal);
}

#[test]
fn completion_seeds() {
    let ok = seeds("decode_completion")
        .iter()
        .filter(|(_, b)| decode_completion(text(b)).is_ok())
        .count();
    assert_eq!(ok, 2);
}

#[test]
fn kb_seeds() {
    for (path, bytes) in seeds("kb_decode") {
        match decode(&bytes) {
            Ok(kb) => assert_eq!(decode(&encode(&kb)).unwrap().len(), kb.len()),
            Err(_) => assert!(path.ends_with("truncated")),
        }
    }
}

#[test]
fn manifest_seeds() {
    for (path, bytes) in seeds("manifest_parse") {
        LabeledManifest::parse(text(&bytes), Path::new("/data")).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    }
}

#[test]
fn profile_seeds() {
    for (_, bytes) in seeds("profiles_toml") {
        let set = ProfileSet::from_toml_str(text(&bytes)).unwrap();
        assert_eq!(ProfileSet::from_toml_str(&set.to_toml_string()).unwrap(), set);
    }
}

#[test]
fn run_file_seeds() {
    for (_, bytes) in seeds("run_file_toml") {
        RunFile::from_toml_str(text(&bytes), Path::new("/runs")).unwrap();
    }
}

#[test]
fn record_seeds() {
    for (path, bytes) in seeds("records_jsonl") {
        let t = text(&bytes);
        let (records, valid) = parse_jsonl(t).unwrap();
        assert!(!records.is_empty());
        assert_eq!(valid < t.len(), path.ends_with("partial_tail"));
    }
}

#[test]
fn image_seeds() {
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
    for (path, bytes) in seeds("preprocess_image") {
        let result = preprocess(&bytes, &config);
        assert_eq!(result.is_err(), path.to_string_lossy().contains("truncated"), "{}", path.display());
    }
}
