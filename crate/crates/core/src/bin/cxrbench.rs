use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};

use cxrbench::carbon::{breakdown, format_sig, ProfileSet};
use cxrbench::harness::config::RunFile;
use cxrbench::harness::demo::write_demo;
use cxrbench::harness::manifest::LabeledManifest;
use cxrbench::harness::records::load_records_dir;
use cxrbench::harness::{report, run_all, ReportOptions};
use cxrbench::kb;
use cxrbench::llm::mock::{serve_forever, MockConfig, MockMode};
use cxrbench::runtime::load_model;

#[derive(Parser)]
#[command(name = "cxrbench", version, about = "Accuracy and carbon benchmarking for chest X-ray classifiers and LLM endpoints")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Embed the manifest's training rows into a knowledge-base file.
    BuildKb {
        #[arg(long)]
        run: PathBuf,
        /// Knowledge base id from the run file.
        #[arg(long)]
        kb: String,
        /// Manifest to embed instead of the run file's.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Run configurations over the manifest's test rows.
    Run {
        #[arg(long)]
        run: PathBuf,
        /// Only these config ids; all when omitted.
        #[arg(long = "config")]
        configs: Vec<String>,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Summarise record files into a report bundle.
    Report {
        /// Run file supplying the records directory, profiles, threshold and bins.
        #[arg(long)]
        run: Option<PathBuf>,
        #[arg(long)]
        records: Option<PathBuf>,
        #[arg(long)]
        profiles: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Config the carbon reductions are measured against.
        #[arg(long)]
        reference: Option<String>,
        #[arg(long, default_value_t = 3.0)]
        sustained_hours: f64,
    },
    /// Footprint of one inference on a profile.
    Estimate {
        #[arg(long)]
        profile: String,
        /// Duration in seconds.
        #[arg(long)]
        duration: f64,
        /// Memory fraction (a + m) / C.
        #[arg(long, default_value_t = 1.0)]
        memory_fraction: f64,
        #[arg(long)]
        profiles: Option<PathBuf>,
    },
    /// Serve a local chat-completion endpoint with deterministic answers.
    MockLlm {
        #[arg(long, default_value = "127.0.0.1:8089")]
        addr: SocketAddr,
        /// Reply with this text instead of a derived answer.
        #[arg(long)]
        fixed_text: Option<String>,
        #[arg(long, default_value_t = 300)]
        image_tokens: u64,
        #[arg(long, default_value_t = 0)]
        latency_ms: u64,
    },
    /// Write a fixture model, synthetic images, manifest and run file.
    DemoFixtures {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        images: usize,
        #[arg(long, default_value = "http://127.0.0.1:8089/v1")]
        endpoint_url: String,
    },
}

fn load_profiles(path: Option<&PathBuf>) -> Result<ProfileSet> {
    Ok(match path {
        Some(p) => ProfileSet::load(p).with_context(|| format!("loading profiles {}", p.display()))?,
        None => ProfileSet::builtin(),
    })
}

fn load_run(path: &PathBuf) -> Result<RunFile> {
    RunFile::load(path).with_context(|| format!("loading run file {}", path.display()))
}

fn load_manifest(run: &RunFile, path: Option<&PathBuf>) -> Result<LabeledManifest> {
    let path = path.cloned().unwrap_or_else(|| run.manifest_path());
    LabeledManifest::load(&path).with_context(|| format!("loading manifest {}", path.display()))
}

fn build_kb(run: PathBuf, kb_id: String, manifest: Option<PathBuf>) -> Result<()> {
    let run = load_run(&run)?;
    let spec = run.kb(&kb_id).ok_or_else(|| anyhow!("no kb `{kb_id}` in run file"))?;
    let manifest = load_manifest(&run, manifest.as_ref())?;
    let embedder_cfg = run
        .resolved_model(&spec.embedder)
        .ok_or_else(|| anyhow!("no model `{}` in run file", spec.embedder))?;
    let embedder = load_model(&embedder_cfg)?;
    let report = kb::build(&manifest, &embedder)?;
    let out = run.resolve(&spec.path);
    if let Some(parent) = out.parent() {
        std::fs::create_dir_all(parent)?;
    }
    kb::store::save(&report.kb, &out)?;
    println!(
        "wrote {} ({} entries, dimension {}, {} skipped)",
        out.display(),
        report.kb.len(),
        report.kb.dim(),
        report.skipped.len()
    );
    Ok(())
}

fn run_cmd(run: PathBuf, configs: Vec<String>, manifest: Option<PathBuf>) -> Result<()> {
    let run = load_run(&run)?;
    let manifest = load_manifest(&run, manifest.as_ref())?;
    let profiles = run.profiles()?;
    for s in run_all(&run, &manifest, &profiles, &configs)? {
        println!(
            "{}: {} test rows, {} resumed, {} written, {} anomalies -> {}",
            s.config_id,
            s.test_rows,
            s.resumed,
            s.written,
            s.anomalies,
            s.records_path.display()
        );
    }
    Ok(())
}

fn report_cmd(
    run: Option<PathBuf>,
    records: Option<PathBuf>,
    profiles: Option<PathBuf>,
    out: PathBuf,
    reference: Option<String>,
    sustained_hours: f64,
) -> Result<()> {
    let run = run.as_ref().map(load_run).transpose()?;
    let records_dir = match (&records, &run) {
        (Some(r), _) => r.clone(),
        (None, Some(run)) => run.records_dir(),
        (None, None) => bail!("pass --records or --run"),
    };
    let profiles = match (&profiles, &run) {
        (Some(p), _) => load_profiles(Some(p))?,
        (None, Some(run)) => run.profiles()?,
        (None, None) => ProfileSet::builtin(),
    };
    let mut opts = ReportOptions {
        reference_config: reference,
        sustained_hours,
        ..ReportOptions::default()
    };
    if let Some(run) = &run {
        opts.threshold = run.run.threshold;
        opts.bins = run.run.bins;
    }
    let records = load_records_dir(&records_dir)?;
    let bundle = report(&records, &profiles, &opts)?;
    bundle.write(&out)?;
    println!(
        "wrote {} files to {} (bundle sha256 {})",
        bundle.files.len(),
        out.display(),
        bundle.digest()
    );
    Ok(())
}

fn estimate(profile: String, duration: f64, fraction: f64, profiles: Option<PathBuf>) -> Result<()> {
    let profiles = load_profiles(profiles.as_ref())?;
    let p = profiles.get(&profile)?;
    let b = breakdown(p, duration, fraction)?;
    println!("profile            {}", b.profile_name);
    println!("duration           {} s", b.duration_s);
    println!("E                  {} mgCO2eq ({})", format_sig(b.total_mg, 3), b.total_mg);
    println!(
        "E_m                {} mgCO2eq/MB ({})",
        format_sig(b.memory_scaled_mg_per_mb, 3),
        b.memory_scaled_mg_per_mb
    );
    println!("billed minimum     {} mgCO2eq", format_sig(b.billed_minimum_mg, 3));
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::BuildKb { run, kb, manifest } => build_kb(run, kb, manifest),
        Command::Run { run, configs, manifest } => run_cmd(run, configs, manifest),
        Command::Report {
            run,
            records,
            profiles,
            out,
            reference,
            sustained_hours,
        } => report_cmd(run, records, profiles, out, reference, sustained_hours),
        Command::Estimate {
            profile,
            duration,
            memory_fraction,
            profiles,
        } => estimate(profile, duration, memory_fraction, profiles),
        Command::MockLlm {
            addr,
            fixed_text,
            image_tokens,
            latency_ms,
        } => {
            let mode = match fixed_text {
                Some(text) => MockMode::Fixed {
                    text,
                    prompt_tokens: None,
                },
                None => MockMode::Deterministic,
            };
            let config = MockConfig {
                mode,
                image_tokens,
                latency: Duration::from_millis(latency_ms),
                ..MockConfig::default()
            };
            serve_forever(addr, config).context("serving mock endpoint")
        }
        Command::DemoFixtures {
            out,
            images,
            endpoint_url,
        } => {
            let paths = write_demo(&out, images, &endpoint_url)?;
            println!("wrote demo to {}; run file {}", paths.dir.display(), paths.run_file.display());
            Ok(())
        }
    }
}
