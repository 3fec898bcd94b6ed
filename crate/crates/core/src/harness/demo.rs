//! Self-contained synthetic benchmark: fixture classifier, labelled PNGs,
//! manifest and run file.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::runtime::fixture::{FixtureClassifier, SplitMix, EMBEDDING_NAME};

pub const IMAGE_SIZE: u32 = 48;

#[derive(Debug, Clone, PartialEq)]
pub struct DemoPaths {
    pub dir: PathBuf,
    pub model: PathBuf,
    pub manifest: PathBuf,
    pub run_file: PathBuf,
    pub kb: PathBuf,
}

/// Grey image whose mean brightness tracks the label, with pixel noise.
fn synthetic_png(mean: f32, rng: &mut SplitMix) -> Vec<u8> {
    let img = image::GrayImage::from_fn(IMAGE_SIZE, IMAGE_SIZE, |_, _| {
        let v = (mean + 0.15 * rng.next_signed()).clamp(0.0, 1.0);
        image::Luma([(v * 255.0).round() as u8])
    });
    let mut out = std::io::Cursor::new(Vec::new());
    image::DynamicImage::from(img)
        .write_to(&mut out, image::ImageFormat::Png)
        .expect("in-memory png encode");
    out.into_inner()
}

/// Writes `n_images` images (half positive), split evenly between train
/// and test, plus a run file whose LLM endpoint is `endpoint_url`.
pub fn write_demo(dir: impl AsRef<Path>, n_images: usize, endpoint_url: &str) -> std::io::Result<DemoPaths> {
    let dir = dir.as_ref().to_path_buf();
    std::fs::create_dir_all(dir.join("images"))?;
    std::fs::create_dir_all(dir.join("models"))?;
    std::fs::create_dir_all(dir.join("kb"))?;
    let model = dir.join("models/fixture.onnx");
    FixtureClassifier::default().write(&model)?;

    let mut rng = SplitMix(2024);
    let mut manifest = String::from("sample_id,path,label,split\n");
    for i in 0..n_images {
        let positive = i % 2 == 0;
        let split = if (i / 2) % 2 == 0 { "train" } else { "test" };
        // a few samples land on the wrong side of 0.5
        let jitter = (rng.next_u64() % 1000) as f32 / 1000.0;
        let mean = if positive { 0.42 + 0.4 * jitter } else { 0.18 + 0.4 * jitter };
        let id = format!("{}{i:04}", if positive { "p" } else { "n" });
        let rel = format!("images/{id}.png");
        std::fs::write(dir.join(&rel), synthetic_png(mean, &mut rng))?;
        let label = if positive { "positive" } else { "negative" };
        writeln!(manifest, "{id},{rel},{label},{split}").expect("string write");
    }
    let manifest_path = dir.join("manifest.csv");
    std::fs::write(&manifest_path, manifest)?;

    let run = format!(
        r#"[run]
manifest = "manifest.csv"
records_dir = "records"

[[model]]
id = "fixture"
model_path = "models/fixture.onnx"
input_width = 32
input_height = 32
positive_class_index = 0
embedding_layer = "{EMBEDDING_NAME}"

[[endpoint]]
id = "mock"
base_url = "{endpoint_url}"
model = "gpt-4.1-nano"
timeout_s = 10
max_retries = 2
backoff_ms = 20

[[kb]]
id = "fixture-kb"
path = "kb/fixture.cxkb"
embedder = "fixture"
k = 3

[[config]]
id = "fixture-local"
kind = "local"
model = "fixture"
memory = {{ app_size_mb = 10, instance_total_mb = 100 }}

[[config]]
id = "mock-nano"
kind = "llm"
endpoint = "mock"
remote_profile = "gpt-4.1-nano"
memory = {{ app_size_mb = 36.8, instance_total_mb = 100 }}

[[config]]
id = "mock-nano-kb"
kind = "llm_with_kb"
endpoint = "mock"
kb = "fixture-kb"
remote_profile = "gpt-4.1-nano"
memory = {{ app_size_mb = 36.8, instance_total_mb = 100 }}
timing_mode = "concurrent"
max_in_flight = 4
"#
    );
    let run_file = dir.join("run.toml");
    std::fs::write(&run_file, run)?;
    Ok(DemoPaths {
        kb: dir.join("kb/fixture.cxkb"),
        dir,
        model,
        manifest: manifest_path,
        run_file,
    })
}
