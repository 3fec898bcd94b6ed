use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::run::attribute_carbon;
use crate::carbon::{
    compare_footprints, format_sig, reduction_percent, sustained_footprint, CarbonError, ComparisonTable,
    InfrastructureProfile, ProfileSet,
};
use crate::metrics::{
    format_rate, summarize, InferenceRecord, MetricsError, MetricsSummary, DEFAULT_BINS, DEFAULT_THRESHOLD,
};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no records to report")]
    Empty,
    #[error("records come from different manifests ({0} and {1})")]
    MixedManifests(String, String),
    #[error("config `{config_id}` has two records for `{sample_id}`")]
    Duplicate { config_id: String, sample_id: String },
    #[error("config `{config_id}`: {source}")]
    Metrics {
        config_id: String,
        source: MetricsError,
    },
    #[error("records reference unknown profile `{0}`")]
    UnknownProfile(String),
    #[error("unknown reference config `{0}`")]
    UnknownReference(String),
    #[error(transparent)]
    Carbon(#[from] CarbonError),
    #[error("writing csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("writing report: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportOptions {
    pub threshold: f64,
    pub bins: usize,
    /// Config the reductions are measured against; the one with the largest
    /// median footprint when unset.
    pub reference_config: Option<String>,
    pub sustained_hours: f64,
    /// Row of the sustained comparison the others are divided by; the first
    /// transport baseline when unset.
    pub baseline: Option<String>,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            bins: DEFAULT_BINS,
            reference_config: None,
            sustained_hours: 3.0,
            baseline: None,
        }
    }
}

/// Stored-timer carbon check for every record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CarbonCheck {
    pub records_checked: usize,
    pub records_without_carbon: usize,
    /// `config_id/sample_id` of records whose stored carbon differs.
    pub mismatches: Vec<String>,
}

/// Report files keyed by file name.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ReportBundle {
    pub files: BTreeMap<String, String>,
}

impl ReportBundle {
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<(), std::io::Error> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        for (name, content) in &self.files {
            std::fs::write(dir.join(name), content)?;
        }
        Ok(())
    }

    /// SHA-256 over every file name and content, in name order.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (name, content) in &self.files {
            h.update((name.len() as u64).to_le_bytes());
            h.update(name.as_bytes());
            h.update((content.len() as u64).to_le_bytes());
            h.update(content.as_bytes());
        }
        hex::encode(h.finalize())
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.files.get(name).map(String::as_str)
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_else(|| "undefined".into())
}

fn sig(v: Option<f64>) -> String {
    v.map(|v| format_sig(v, 3)).unwrap_or_else(|| "undefined".into())
}

fn csv_text(header: &[&str], rows: &[Vec<String>]) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn group(records: &[InferenceRecord]) -> Result<BTreeMap<String, Vec<InferenceRecord>>, ReportError> {
    let first = records.first().ok_or(ReportError::Empty)?;
    let mut groups: BTreeMap<String, Vec<InferenceRecord>> = BTreeMap::new();
    for r in records {
        if r.manifest_digest != first.manifest_digest {
            return Err(ReportError::MixedManifests(
                first.manifest_digest.clone(),
                r.manifest_digest.clone(),
            ));
        }
        groups.entry(r.config_id.clone()).or_default().push(r.clone());
    }
    for (config_id, rs) in &mut groups {
        rs.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
        if let Some(w) = rs.windows(2).find(|w| w[0].sample_id == w[1].sample_id) {
            return Err(ReportError::Duplicate {
                config_id: config_id.clone(),
                sample_id: w[0].sample_id.clone(),
            });
        }
    }
    Ok(groups)
}

fn lookup<'a>(profiles: &'a ProfileSet, name: &str) -> Result<&'a InfrastructureProfile, ReportError> {
    profiles.get(name).map_err(|_| ReportError::UnknownProfile(name.to_string()))
}

/// Recomputes each record's carbon from its timers and the profiles.
pub fn check_carbon(records: &[InferenceRecord], profiles: &ProfileSet) -> Result<CarbonCheck, ReportError> {
    let mut check = CarbonCheck {
        records_checked: 0,
        records_without_carbon: 0,
        mismatches: Vec::new(),
    };
    for r in records {
        let Some(stored) = &r.carbon else {
            check.records_without_carbon += 1;
            continue;
        };
        let app = lookup(profiles, &stored.app_profile)?;
        let remote = match (&stored.remote_profile, stored.remote_time_basis) {
            (Some(name), Some(basis)) => Some((lookup(profiles, name)?, basis)),
            _ => None,
        };
        let recomputed = attribute_carbon(app, remote, r.end_to_end_ms, r.model_exec_ms, stored.memory_fraction)?;
        check.records_checked += 1;
        if &recomputed != stored {
            check.mismatches.push(format!("{}/{}", r.config_id, r.sample_id));
        }
    }
    Ok(check)
}

fn table2(summaries: &[(MetricsSummary, Option<f64>, String)]) -> Result<String, csv::Error> {
    let rows: Vec<Vec<String>> = summaries
        .iter()
        .map(|(s, fraction, basis)| {
            vec![
                s.config_id.clone(),
                s.latency.n.to_string(),
                s.anomalies.values().sum::<u64>().to_string(),
                s.latency.median_ms.to_string(),
                s.latency.iqr_ms.to_string(),
                s.median_model_exec_ms.to_string(),
                opt(s.median_carbon_mg),
                opt(s.median_carbon_per_mb),
                opt(s.median_app_mg),
                opt(s.median_remote_mg),
                opt(*fraction),
                basis.clone(),
            ]
        })
        .collect();
    csv_text(
        &[
            "config_id",
            "scored",
            "anomalies",
            "median_time_ms",
            "iqr_time_ms",
            "median_model_exec_ms",
            "median_carbon_mg",
            "median_carbon_mg_per_mb",
            "median_app_mg",
            "median_remote_mg",
            "memory_fraction",
            "remote_time_basis",
        ],
        &rows,
    )
}

fn table3(summaries: &[(MetricsSummary, Option<f64>, String)]) -> Result<String, csv::Error> {
    let rows: Vec<Vec<String>> = summaries
        .iter()
        .map(|(s, _, _)| {
            let cm = &s.confusion;
            vec![
                s.config_id.clone(),
                cm.tp.to_string(),
                cm.fp.to_string(),
                cm.tn.to_string(),
                cm.fn_.to_string(),
                cm.excluded.to_string(),
                format_rate(s.rates.accuracy),
                format_rate(s.rates.specificity),
                format_rate(s.rates.sensitivity),
                format_rate(s.rates.ppv),
            ]
        })
        .collect();
    csv_text(
        &["config_id", "tp", "fp", "tn", "fn", "excluded", "accuracy", "specificity", "sensitivity", "ppv"],
        &rows,
    )
}

fn sustained_table(
    used_profiles: &BTreeSet<String>,
    profiles: &ProfileSet,
    opts: &ReportOptions,
) -> Result<Option<ComparisonTable>, ReportError> {
    let hours = opts.sustained_hours;
    let mut entries = Vec::new();
    for name in used_profiles {
        entries.push((format!("{name} {hours} h"), sustained_footprint(lookup(profiles, name)?, hours)?));
    }
    for a in &profiles.appliances {
        entries.push((format!("{} {hours} h", a.name), a.sustained_grams(hours)?));
    }
    for t in &profiles.transports {
        entries.push((format!("{} {} km", t.name, t.distance_km), t.grams()?));
    }
    let baseline = match &opts.baseline {
        Some(b) => entries
            .iter()
            .find(|(label, _)| label == b || label.starts_with(&format!("{b} ")))
            .map(|(label, _)| label.clone())
            .ok_or_else(|| CarbonError::InvalidArgument(format!("no sustained row for baseline `{b}`")))?,
        None => match profiles.transports.first() {
            Some(t) => format!("{} {} km", t.name, t.distance_km),
            None => match entries.first() {
                Some((label, _)) => label.clone(),
                None => return Ok(None),
            },
        },
    };
    Ok(Some(compare_footprints(&entries, &baseline)?))
}

const NOTES: [&str; 4] = [
    "Predicted positive when p_positive >= threshold.",
    "Quantiles use lower interpolation: sorted[floor(q * (n - 1))].",
    "Anomalous records are excluded from rates, quantiles, histograms and carbon medians, and listed in anomalies.csv.",
    "Reductions are computed from unrounded medians. Reductions computed from rounded table values, or from means, can differ by several tenths of a percentage point.",
];

/// Builds the report bundle. Identical records give a byte-identical bundle.
pub fn report(
    records: &[InferenceRecord],
    profiles: &ProfileSet,
    opts: &ReportOptions,
) -> Result<ReportBundle, ReportError> {
    let groups = group(records)?;
    let manifest_digest = records[0].manifest_digest.clone();
    let mut summaries = Vec::new();
    let mut used_profiles = BTreeSet::new();
    let mut config_meta = Vec::new();
    for (config_id, rs) in &groups {
        let s = summarize(rs, opts.threshold, opts.bins).map_err(|source| ReportError::Metrics {
            config_id: config_id.clone(),
            source,
        })?;
        let carbon = rs.iter().find_map(|r| r.carbon.as_ref());
        let fraction = carbon.map(|c| c.memory_fraction);
        let basis = carbon
            .and_then(|c| c.remote_time_basis)
            .map(|b| serde_json::to_value(b).expect("basis serialises").as_str().unwrap_or_default().to_string())
            .unwrap_or_else(|| "none".into());
        let templates: BTreeSet<&str> = rs.iter().filter_map(|r| r.template_id.as_deref()).collect();
        let mut app_profiles = BTreeSet::new();
        let mut remote_profiles = BTreeSet::new();
        for c in rs.iter().filter_map(|r| r.carbon.as_ref()) {
            app_profiles.insert(c.app_profile.clone());
            remote_profiles.extend(c.remote_profile.clone());
        }
        used_profiles.extend(app_profiles.iter().cloned());
        used_profiles.extend(remote_profiles.iter().cloned());
        config_meta.push(json!({
            "config_id": config_id,
            "records": rs.len(),
            "templates": templates,
            "app_profiles": app_profiles,
            "remote_profiles": remote_profiles,
            "remote_time_basis": basis,
            "memory_fraction": fraction,
        }));
        summaries.push((s, fraction, basis));
    }

    let reference = match &opts.reference_config {
        Some(id) => {
            if !groups.contains_key(id) {
                return Err(ReportError::UnknownReference(id.clone()));
            }
            Some(id.clone())
        }
        None => summaries
            .iter()
            .filter_map(|(s, _, _)| s.median_carbon_mg.map(|m| (m, &s.config_id)))
            .max_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, id)| id.clone()),
    };
    let reference_mg = reference.as_ref().and_then(|id| {
        summaries
            .iter()
            .find(|(s, _, _)| &s.config_id == id)
            .and_then(|(s, _, _)| s.median_carbon_mg)
    });
    let reductions: Vec<Vec<String>> = summaries
        .iter()
        .map(|(s, _, _)| {
            let red = match (s.median_carbon_mg, reference_mg) {
                (Some(v), Some(r)) => reduction_percent(v, r),
                _ => None,
            };
            vec![
                s.config_id.clone(),
                opt(s.median_carbon_mg),
                reference.clone().unwrap_or_else(|| "none".into()),
                opt(red),
            ]
        })
        .collect();

    let anomaly_rows: Vec<Vec<String>> = groups
        .values()
        .flatten()
        .filter_map(|r| {
            r.anomaly.map(|a| {
                vec![
                    r.config_id.clone(),
                    r.sample_id.clone(),
                    a.as_str().to_string(),
                    r.anomaly_detail.clone().unwrap_or_default(),
                ]
            })
        })
        .collect();

    let histograms: BTreeMap<&str, _> = summaries
        .iter()
        .map(|(s, _, _)| (s.config_id.as_str(), &s.histogram))
        .collect();
    let sustained = sustained_table(&used_profiles, profiles, opts)?;
    let check = check_carbon(records, profiles)?;
    let used: Vec<&InfrastructureProfile> = used_profiles
        .iter()
        .map(|n| lookup(profiles, n))
        .collect::<Result<_, _>>()?;
    let metadata = json!({
        "generator": format!("cxrbench {}", env!("CARGO_PKG_VERSION")),
        "manifest_digest": manifest_digest,
        "threshold": opts.threshold,
        "histogram_bins": opts.bins,
        "sustained_hours": opts.sustained_hours,
        "reference_config": reference,
        "configs": config_meta,
        "profiles": used,
        "appliances": profiles.appliances,
        "transports": profiles.transports,
        "notes": NOTES,
    });

    let mut files = BTreeMap::new();
    files.insert("table2_performance.csv".into(), table2(&summaries)?);
    files.insert("table3_accuracy.csv".into(), table3(&summaries)?);
    files.insert("reductions.csv".into(), csv_text(&["config_id", "median_carbon_mg", "reference_config", "reduction_percent"], &reductions)?);
    files.insert("anomalies.csv".into(), csv_text(&["config_id", "sample_id", "anomaly", "detail"], &anomaly_rows)?);
    files.insert("histograms.json".into(), pretty(&histograms));
    files.insert(
        "summaries.json".into(),
        pretty(&summaries.iter().map(|(s, _, _)| s).collect::<Vec<_>>()),
    );
    files.insert("carbon_check.json".into(), pretty(&check));
    files.insert("metadata.json".into(), pretty(&metadata));
    if let Some(t) = &sustained {
        files.insert("sustained.csv".into(), t.to_csv()?);
    }
    files.insert(
        "report.md".into(),
        markdown(&summaries, &reductions, &anomaly_rows, sustained.as_ref(), &check),
    );
    Ok(ReportBundle { files })
}

fn pretty<T: Serialize + ?Sized>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report values serialise");
    s.push('\n');
    s
}

fn md_table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = format!("| {} |\n|{}\n", header.join(" | "), "---|".repeat(header.len()));
    for row in rows {
        out.push_str(&format!("| {} |\n", row.join(" | ")));
    }
    out
}

fn markdown(
    summaries: &[(MetricsSummary, Option<f64>, String)],
    reductions: &[Vec<String>],
    anomalies: &[Vec<String>],
    sustained: Option<&ComparisonTable>,
    check: &CarbonCheck,
) -> String {
    let mut md = String::from("# Benchmark report\n\n## Performance\n\n");
    md.push_str(&md_table(
        &["Config", "Median time (ms)", "IQR (ms)", "Median carbon (mgCO2eq)", "Median carbon (mgCO2eq/MB)"],
        summaries.iter().map(|(s, _, _)| {
            vec![
                s.config_id.clone(),
                format_sig(s.latency.median_ms, 3),
                format_sig(s.latency.iqr_ms, 3),
                sig(s.median_carbon_mg),
                sig(s.median_carbon_per_mb),
            ]
        }),
    ));
    md.push_str("\n## Diagnostic accuracy (%)\n\n");
    md.push_str(&md_table(
        &["Config", "Accuracy", "Specificity", "Sensitivity", "PPV", "Excluded"],
        summaries.iter().map(|(s, _, _)| {
            vec![
                s.config_id.clone(),
                format_rate(s.rates.accuracy),
                format_rate(s.rates.specificity),
                format_rate(s.rates.sensitivity),
                format_rate(s.rates.ppv),
                s.confusion.excluded.to_string(),
            ]
        }),
    ));
    md.push_str("\n## Carbon reduction against the reference\n\n");
    md.push_str(&md_table(
        &["Config", "Reference", "Reduction (%)"],
        reductions.iter().map(|r| {
            let red = r[3].parse::<f64>().map(|v| format!("{v:.2}")).unwrap_or_else(|_| r[3].clone());
            vec![r[0].clone(), r[2].clone(), red]
        }),
    ));
    if let Some(t) = sustained {
        md.push_str(&format!("\n## Sustained use (relative to {})\n\n", t.baseline));
        md.push_str(&md_table(
            &["Source", "gCO2eq", "Ratio"],
            t.rows.iter().map(|r| {
                vec![
                    r.label.clone(),
                    format_sig(r.grams, 3),
                    r.ratio_to_baseline
                        .map(|x| format_sig(x, 3))
                        .unwrap_or_else(|| "undefined".into()),
                ]
            }),
        ));
    }
    md.push_str("\n## Anomalies\n\n");
    md.push_str(&md_table(
        &["Config", "Sample", "Kind", "Detail"],
        anomalies.iter().map(|r| {
            let detail: String = r[3].replace(['\n', '|'], " ").chars().take(120).collect();
            vec![r[0].clone(), r[1].clone(), r[2].clone(), detail]
        }),
    ));
    md.push_str(&format!(
        "\n## Carbon recomputation\n\n{} records recomputed from stored timers, {} mismatches.\n\n## Notes\n\n",
        check.records_checked,
        check.mismatches.len()
    ));
    for n in NOTES {
        md.push_str(&format!("- {n}\n"));
    }
    md
}
