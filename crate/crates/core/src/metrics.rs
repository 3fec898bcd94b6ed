//! Inference records and the statistics derived from them.
//!
//! Rates come from a [`ConfusionMatrix`] built with a fixed threshold
//! (ties predicted positive). Latency quantiles use lower interpolation,
//! `sorted[floor(q * (n - 1))]`, so results are exact on integer data.
//! Anomalous records are left out of every rate, quantile and histogram.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnosis::{Diagnosis, Label};

pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_BINS: usize = 10;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no records to aggregate")]
    EmptyInput,
    #[error("no scored records (all {0} were anomalous)")]
    NoScoredRecords(usize),
    #[error("records mix configurations `{0}` and `{1}`")]
    MixedConfigs(String, String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("record `{sample_id}` is invalid: {reason}")]
    InvalidRecord { sample_id: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Anomaly {
    /// Prompt-token usage too small to include the image.
    SuspectNoImage,
    Refusal,
    ParseError,
    /// The endpoint could not be reached or answered with an error.
    TransportError,
    /// Local preprocessing or inference failed.
    InferenceError,
}

impl Anomaly {
    pub const ALL: [Anomaly; 5] = [
        Anomaly::SuspectNoImage,
        Anomaly::Refusal,
        Anomaly::ParseError,
        Anomaly::TransportError,
        Anomaly::InferenceError,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Anomaly::SuspectNoImage => "suspect_no_image",
            Anomaly::Refusal => "refusal",
            Anomaly::ParseError => "parse_error",
            Anomaly::TransportError => "transport_error",
            Anomaly::InferenceError => "inference_error",
        }
    }
}

/// Which timer the remote footprint was charged against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeBasis {
    #[default]
    RoundTrip,
    EndToEnd,
}

/// Carbon charged to one record, with each component kept separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarbonAttribution {
    pub app_profile: String,
    /// App profile over the end-to-end time.
    pub app_mg: f64,
    pub remote_profile: Option<String>,
    /// Remote profile over the API round-trip time.
    pub remote_mg_round_trip: Option<f64>,
    /// Remote profile over the end-to-end time.
    pub remote_mg_end_to_end: Option<f64>,
    pub remote_time_basis: Option<TimeBasis>,
    /// `app_mg` plus the remote component on the chosen basis.
    pub total_mg: f64,
    pub memory_fraction: f64,
    pub memory_scaled_mg_per_mb: f64,
}

impl CarbonAttribution {
    pub fn remote_mg(&self) -> Option<f64> {
        match self.remote_time_basis? {
            TimeBasis::RoundTrip => self.remote_mg_round_trip,
            TimeBasis::EndToEnd => self.remote_mg_end_to_end,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceRecord {
    pub config_id: String,
    pub sample_id: String,
    pub ground_truth: Label,
    pub diagnosis: Option<Diagnosis>,
    pub anomaly: Option<Anomaly>,
    #[serde(default)]
    pub anomaly_detail: Option<String>,
    /// From image upload to probabilities being available.
    pub end_to_end_ms: f64,
    /// Model execution, or API round trip for remote models.
    pub model_exec_ms: f64,
    pub started_unix_us: u64,
    pub ended_unix_us: u64,
    #[serde(default)]
    pub prompt_tokens: Option<u64>,
    #[serde(default)]
    pub completion_tokens: Option<u64>,
    #[serde(default)]
    pub carbon: Option<CarbonAttribution>,
    pub manifest_digest: String,
    #[serde(default)]
    pub template_id: Option<String>,
}

impl InferenceRecord {
    pub fn validate(&self) -> Result<(), MetricsError> {
        let invalid = |reason: &str| MetricsError::InvalidRecord {
            sample_id: self.sample_id.clone(),
            reason: reason.to_string(),
        };
        if !(self.end_to_end_ms.is_finite() && self.end_to_end_ms >= 0.0) {
            return Err(invalid("end_to_end_ms must be finite and >= 0"));
        }
        if !(self.model_exec_ms.is_finite() && self.model_exec_ms >= 0.0) {
            return Err(invalid("model_exec_ms must be finite and >= 0"));
        }
        if self.model_exec_ms > self.end_to_end_ms {
            return Err(invalid("model_exec_ms exceeds end_to_end_ms"));
        }
        if self.ended_unix_us < self.started_unix_us {
            return Err(invalid("ends before it starts"));
        }
        match (self.anomaly, self.diagnosis) {
            (Some(_), Some(_)) => Err(invalid("anomalous record carries a diagnosis")),
            (None, None) => Err(invalid("record has neither diagnosis nor anomaly")),
            _ => Ok(()),
        }
    }

    pub fn is_scored(&self) -> bool {
        self.anomaly.is_none() && self.diagnosis.is_some()
    }
}

fn check_single_config(records: &[InferenceRecord]) -> Result<(), MetricsError> {
    let first = records.first().ok_or(MetricsError::EmptyInput)?;
    match records.iter().find(|r| r.config_id != first.config_id) {
        Some(other) => Err(MetricsError::MixedConfigs(
            first.config_id.clone(),
            other.config_id.clone(),
        )),
        None => Ok(()),
    }
}

fn scored(records: &[InferenceRecord]) -> impl Iterator<Item = (&InferenceRecord, Diagnosis)> {
    records
        .iter()
        .filter(|r| r.anomaly.is_none())
        .filter_map(|r| r.diagnosis.map(|d| (r, d)))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    /// Anomalous records left out of the four cells.
    pub excluded: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        Self {
            tp,
            fp,
            tn,
            fn_,
            excluded: 0,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> u64 {
        self.tn + self.fp
    }
}

/// Confusion matrix for one configuration; `p_positive >= threshold` is
/// predicted positive.
pub fn confusion(records: &[InferenceRecord], threshold: f64) -> Result<ConfusionMatrix, MetricsError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(MetricsError::InvalidArgument(format!(
            "threshold {threshold} outside [0, 1]"
        )));
    }
    check_single_config(records)?;
    let mut cm = ConfusionMatrix::default();
    for r in records {
        let Some(d) = r.diagnosis.filter(|_| r.anomaly.is_none()) else {
            cm.excluded += 1;
            continue;
        };
        match (r.ground_truth, d.predicted(threshold)) {
            (Label::Positive, Label::Positive) => cm.tp += 1,
            (Label::Positive, Label::Negative) => cm.fn_ += 1,
            (Label::Negative, Label::Negative) => cm.tn += 1,
            (Label::Negative, Label::Positive) => cm.fp += 1,
        }
    }
    Ok(cm)
}

/// Rates as percentages. `None` marks a zero denominator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub accuracy: Option<f64>,
    pub specificity: Option<f64>,
    pub sensitivity: Option<f64>,
    pub ppv: Option<f64>,
}

fn percent(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| 100.0 * num as f64 / den as f64)
}

pub fn summary(cm: &ConfusionMatrix) -> Result<Rates, MetricsError> {
    if cm.total() == 0 {
        return Err(MetricsError::NoScoredRecords(cm.excluded as usize));
    }
    Ok(Rates {
        accuracy: percent(cm.tp + cm.tn, cm.total()),
        specificity: percent(cm.tn, cm.tn + cm.fp),
        sensitivity: percent(cm.tp, cm.tp + cm.fn_),
        ppv: percent(cm.tp, cm.tp + cm.fp),
    })
}

/// One decimal place, or `undefined` for a missing rate.
pub fn format_rate(rate: Option<f64>) -> String {
    match rate {
        Some(r) => format!("{r:.1}"),
        None => "undefined".to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// Lower edges; bin `i` covers `[edges[i], edges[i] + width)`, and the
    /// last bin also includes 1.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub masses: Vec<f64>,
}

/// Distribution of the probability given to the true class.
pub fn confidence_histogram(records: &[InferenceRecord], bins: usize) -> Result<Histogram, MetricsError> {
    if bins == 0 {
        return Err(MetricsError::InvalidArgument("bins must be >= 1".into()));
    }
    if records.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut counts = vec![0u64; bins];
    for (r, d) in scored(records) {
        let score = d.probability_of(r.ground_truth).clamp(0.0, 1.0);
        let idx = ((score * bins as f64).floor() as usize).min(bins - 1);
        counts[idx] += 1;
    }
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return Err(MetricsError::NoScoredRecords(records.len()));
    }
    Ok(Histogram {
        edges: (0..bins).map(|i| i as f64 / bins as f64).collect(),
        masses: counts.iter().map(|&c| c as f64 / n as f64).collect(),
        counts,
    })
}

/// `sorted[floor(q * (n - 1))]`.
pub fn lower_quantile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() || !(0.0..=1.0).contains(&q) {
        return None;
    }
    let idx = (q * (sorted.len() - 1) as f64).floor() as usize;
    sorted.get(idx.min(sorted.len() - 1)).copied()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub median_ms: f64,
    pub iqr_ms: f64,
    pub q1_ms: f64,
    pub q3_ms: f64,
    pub n: usize,
}

fn sorted_values(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v
}

fn quartiles(sorted: &[f64]) -> (f64, f64, f64) {
    // integer index arithmetic keeps the floor exact
    let last = sorted.len() - 1;
    (sorted[last / 4], sorted[last / 2], sorted[3 * last / 4])
}

/// Median and IQR of end-to-end time over scored records.
pub fn latency_stats(records: &[InferenceRecord]) -> Result<LatencyStats, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let sorted = sorted_values(scored(records).map(|(r, _)| r.end_to_end_ms));
    if sorted.is_empty() {
        return Err(MetricsError::NoScoredRecords(records.len()));
    }
    let (q1, median, q3) = quartiles(&sorted);
    Ok(LatencyStats {
        median_ms: median,
        iqr_ms: q3 - q1,
        q1_ms: q1,
        q3_ms: q3,
        n: sorted.len(),
    })
}

/// Lower-interpolated median of any per-record quantity over scored records.
pub fn median_of<F>(records: &[InferenceRecord], f: F) -> Option<f64>
where
    F: Fn(&InferenceRecord) -> Option<f64>,
{
    let sorted = sorted_values(scored(records).filter_map(|(r, _)| f(r)));
    lower_quantile(&sorted, 0.5)
}

/// Everything reported for one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub config_id: String,
    pub confusion: ConfusionMatrix,
    pub rates: Rates,
    pub latency: LatencyStats,
    pub median_model_exec_ms: f64,
    pub median_carbon_mg: Option<f64>,
    pub median_carbon_per_mb: Option<f64>,
    pub median_app_mg: Option<f64>,
    pub median_remote_mg: Option<f64>,
    pub histogram: Histogram,
    pub anomalies: BTreeMap<Anomaly, u64>,
}

pub fn summarize(records: &[InferenceRecord], threshold: f64, bins: usize) -> Result<MetricsSummary, MetricsError> {
    let cm = confusion(records, threshold)?;
    let rates = summary(&cm)?;
    let mut anomalies = BTreeMap::new();
    for r in records {
        if let Some(a) = r.anomaly {
            *anomalies.entry(a).or_insert(0) += 1;
        }
    }
    Ok(MetricsSummary {
        config_id: records[0].config_id.clone(),
        confusion: cm,
        rates,
        latency: latency_stats(records)?,
        median_model_exec_ms: median_of(records, |r| Some(r.model_exec_ms)).unwrap_or(0.0),
        median_carbon_mg: median_of(records, |r| r.carbon.as_ref().map(|c| c.total_mg)),
        median_carbon_per_mb: median_of(records, |r| r.carbon.as_ref().map(|c| c.memory_scaled_mg_per_mb)),
        median_app_mg: median_of(records, |r| r.carbon.as_ref().map(|c| c.app_mg)),
        median_remote_mg: median_of(records, |r| r.carbon.as_ref().and_then(|c| c.remote_mg())),
        histogram: confidence_histogram(records, bins)?,
        anomalies,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(truth: Label, p: Option<f64>, ms: f64) -> InferenceRecord {
        InferenceRecord {
            config_id: "c".into(),
            sample_id: format!("s{ms}"),
            ground_truth: truth,
            diagnosis: p.map(|p| Diagnosis::from_positive(p).unwrap()),
            anomaly: if p.is_none() { Some(Anomaly::ParseError) } else { None },
            anomaly_detail: None,
            end_to_end_ms: ms,
            model_exec_ms: ms,
            started_unix_us: 0,
            ended_unix_us: 0,
            prompt_tokens: None,
            completion_tokens: None,
            carbon: None,
            manifest_digest: "d".into(),
            template_id: None,
        }
    }

    /// Records realising a confusion matrix with p = 0.9 / 0.1.
    fn records_for(cm: ConfusionMatrix) -> Vec<InferenceRecord> {
        let mut out = Vec::new();
        let cells = [
            (cm.tp, Label::Positive, 0.9),
            (cm.fn_, Label::Positive, 0.1),
            (cm.tn, Label::Negative, 0.1),
            (cm.fp, Label::Negative, 0.9),
        ];
        for (n, truth, p) in cells {
            for _ in 0..n {
                let i = out.len() as f64;
                out.push(rec(truth, Some(p), i));
            }
        }
        out
    }

    fn rates_1dp(cm: ConfusionMatrix) -> [String; 4] {
        let r = summary(&cm).unwrap();
        [r.accuracy, r.specificity, r.sensitivity, r.ppv].map(format_rate)
    }

    #[test]
    fn discriminative_row_reproduced() {
        let cm = confusion(&records_for(ConfusionMatrix::new(184, 2, 198, 16)), 0.5).unwrap();
        assert_eq!((cm.tp, cm.fp, cm.tn, cm.fn_), (184, 2, 198, 16));
        assert_eq!(rates_1dp(cm), ["95.5", "99.0", "92.0", "98.9"]);
    }

    #[test]
    fn chance_level_row_reproduced() {
        assert_eq!(rates_1dp(ConfusionMatrix::new(97, 103, 97, 103)), ["48.5"; 4]);
    }

    #[test]
    fn low_sensitivity_row_reproduced() {
        assert_eq!(
            rates_1dp(ConfusionMatrix::new(69, 79, 121, 131)),
            ["47.5", "60.5", "34.5", "46.6"]
        );
    }

    #[test]
    fn zero_denominator_is_undefined() {
        let r = summary(&ConfusionMatrix::new(0, 0, 10, 5)).unwrap();
        assert_eq!(r.ppv, None);
        assert_eq!(format_rate(r.ppv), "undefined");
        assert_eq!(r.sensitivity, Some(0.0));
    }

    #[test]
    fn tie_is_positive() {
        let cm = confusion(&[rec(Label::Negative, Some(0.5), 1.0)], 0.5).unwrap();
        assert_eq!(cm.fp, 1);
    }

    #[test]
    fn anomalies_excluded_and_counted() {
        let records = vec![
            rec(Label::Positive, Some(0.9), 1.0),
            rec(Label::Positive, None, 2.0),
            rec(Label::Negative, Some(0.2), 3.0),
        ];
        let cm = confusion(&records, 0.5).unwrap();
        assert_eq!(cm.total(), 2);
        assert_eq!(cm.excluded, 1);
        let s = summarize(&records, 0.5, 10).unwrap();
        assert_eq!(s.anomalies.get(&Anomaly::ParseError), Some(&1));
        assert_eq!(s.latency.n, 2);
    }

    #[test]
    fn empty_and_mixed_inputs_rejected() {
        assert_eq!(confusion(&[], 0.5), Err(MetricsError::EmptyInput));
        let mut other = rec(Label::Positive, Some(0.9), 1.0);
        other.config_id = "d".into();
        let mixed = [rec(Label::Positive, Some(0.9), 1.0), other];
        assert!(matches!(confusion(&mixed, 0.5), Err(MetricsError::MixedConfigs(..))));
        assert!(latency_stats(&[]).is_err());
        assert!(confidence_histogram(&[], 10).is_err());
    }

    #[test]
    fn point_mass_histogram() {
        let records: Vec<_> = (0..20)
            .map(|i| {
                if i % 2 == 0 {
                    rec(Label::Positive, Some(0.95), i as f64)
                } else {
                    rec(Label::Negative, Some(0.05), i as f64)
                }
            })
            .collect();
        let h = confidence_histogram(&records, 10).unwrap();
        assert_eq!(h.counts[9], 20);
        assert_eq!(h.masses[9], 1.0);
        let edge = confidence_histogram(&[rec(Label::Positive, Some(1.0), 0.0)], 10).unwrap();
        assert_eq!(edge.counts[9], 1);
        let zero = confidence_histogram(&[rec(Label::Positive, Some(0.0), 0.0)], 10).unwrap();
        assert_eq!(zero.counts[0], 1);
    }

    #[test]
    fn latency_examples() {
        let records: Vec<_> = [300.0, 100.0, 200.0]
            .iter()
            .map(|&ms| rec(Label::Positive, Some(0.9), ms))
            .collect();
        assert_eq!(latency_stats(&records).unwrap().median_ms, 200.0);
        let constant: Vec<_> = (0..7).map(|_| rec(Label::Positive, Some(0.9), 42.0)).collect();
        let s = latency_stats(&constant).unwrap();
        assert_eq!((s.median_ms, s.iqr_ms), (42.0, 0.0));
    }

    #[test]
    fn record_invariants() {
        let mut r = rec(Label::Positive, Some(0.9), 10.0);
        assert!(r.validate().is_ok());
        r.model_exec_ms = 11.0;
        assert!(r.validate().is_err());
        let mut a = rec(Label::Positive, None, 10.0);
        assert!(a.validate().is_ok());
        a.diagnosis = Some(Diagnosis::from_positive(0.5).unwrap());
        assert!(a.validate().is_err());
    }

    fn naive_quantile(values: &[f64], q: f64) -> f64 {
        let mut v = values.to_vec();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let pos = q * (v.len() - 1) as f64;
        v[pos as usize]
    }

    fn arb_records() -> impl Strategy<Value = Vec<InferenceRecord>> {
        prop::collection::vec((any::<bool>(), 0.0f64..=1.0, 0u32..100_000), 1..200).prop_map(|v| {
            v.into_iter()
                .enumerate()
                .map(|(i, (pos, p, ms))| {
                    let truth = if pos { Label::Positive } else { Label::Negative };
                    let mut r = rec(truth, Some(p), f64::from(ms));
                    r.sample_id = format!("s{i}");
                    r
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn latency_matches_sort_oracle(values in prop::collection::vec(0u32..1_000_000, 1..1000)) {
            let values: Vec<f64> = values.into_iter().map(f64::from).collect();
            let records: Vec<_> = values.iter().map(|&ms| rec(Label::Positive, Some(0.9), ms)).collect();
            let s = latency_stats(&records).unwrap();
            prop_assert_eq!(s.median_ms, naive_quantile(&values, 0.5));
            prop_assert_eq!(s.iqr_ms, naive_quantile(&values, 0.75) - naive_quantile(&values, 0.25));
        }

        #[test]
        fn summary_permutation_invariant(records in arb_records(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = records.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(
                summary(&confusion(&records, 0.5).unwrap()).ok(),
                summary(&confusion(&shuffled, 0.5).unwrap()).ok()
            );
            prop_assert_eq!(
                confidence_histogram(&records, 10).unwrap(),
                confidence_histogram(&shuffled, 10).unwrap()
            );
        }

        #[test]
        fn accuracy_is_class_weighted_mean(tp in 0u64..500, fp in 0u64..500, tn in 0u64..500, fn_ in 0u64..500) {
            let cm = ConfusionMatrix::new(tp, fp, tn, fn_);
            prop_assume!(cm.positives() > 0 && cm.negatives() > 0);
            let r = summary(&cm).unwrap();
            let p = cm.positives() as f64;
            let n = cm.negatives() as f64;
            let weighted = (r.sensitivity.unwrap() * p + r.specificity.unwrap() * n) / (p + n);
            prop_assert!((r.accuracy.unwrap() - weighted).abs() < 1e-9);
        }

        #[test]
        fn threshold_monotonicity(records in arb_records(), a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let low = confusion(&records, lo).unwrap();
            let high = confusion(&records, hi).unwrap();
            prop_assert!(high.tp <= low.tp);
            prop_assert!(high.tn >= low.tn);
        }

        #[test]
        fn histogram_mass_conserved(records in arb_records(), bins in 1usize..50) {
            let h = confidence_histogram(&records, bins).unwrap();
            prop_assert_eq!(h.masses.len(), bins);
            prop_assert!((h.masses.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            prop_assert_eq!(h.counts.iter().sum::<u64>() as usize, records.len());
        }

        #[test]
        fn rates_are_percentages(tp in 0u64..500, fp in 0u64..500, tn in 0u64..500, fn_ in 0u64..500) {
            let cm = ConfusionMatrix::new(tp, fp, tn, fn_);
            prop_assume!(cm.total() > 0);
            let r = summary(&cm).unwrap();
            for rate in [r.accuracy, r.specificity, r.sensitivity, r.ppv].into_iter().flatten() {
                prop_assert!((0.0..=100.0).contains(&rate));
            }
        }
    }
}
