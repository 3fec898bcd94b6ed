use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Allowed deviation of `p_positive + p_negative` from 1 for local models.
pub const LOCAL_SUM_TOLERANCE: f64 = 1e-6;

/// Allowed deviation for probabilities parsed from LLM answers. LLMs print
/// rounded percentages and range midpoints, so the pair is only checked to
/// within the parser's five-point consistency window.
pub const PARSED_SUM_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Positive => "positive",
            Label::Negative => "negative",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unrecognised label `{0}` (expected positive or negative)")]
pub struct LabelError(pub String);

impl FromStr for Label {
    type Err = LabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "positive" | "pos" | "1" | "covid" | "covid-19" => Ok(Label::Positive),
            "negative" | "neg" | "0" | "normal" => Ok(Label::Negative),
            _ => Err(LabelError(s.to_string())),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum DiagnosisError {
    #[error("probability {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("probabilities {p_positive} and {p_negative} do not sum to 1 within {tolerance}")]
    Unnormalised {
        p_positive: f64,
        p_negative: f64,
        tolerance: f64,
    },
}

/// Paired probabilities produced by any model configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnosis {
    pub p_positive: f64,
    pub p_negative: f64,
}

impl Diagnosis {
    /// Checks range and the pair-sum tolerance.
    pub fn new(p_positive: f64, p_negative: f64, tolerance: f64) -> Result<Self, DiagnosisError> {
        for p in [p_positive, p_negative] {
            if !(0.0..=1.0).contains(&p) {
                return Err(DiagnosisError::OutOfRange(p));
            }
        }
        if (p_positive + p_negative - 1.0).abs() > tolerance {
            return Err(DiagnosisError::Unnormalised {
                p_positive,
                p_negative,
                tolerance,
            });
        }
        Ok(Self {
            p_positive,
            p_negative,
        })
    }

    pub fn from_positive(p_positive: f64) -> Result<Self, DiagnosisError> {
        Self::new(p_positive, 1.0 - p_positive, LOCAL_SUM_TOLERANCE)
    }

    /// Probability assigned to the given class.
    pub fn probability_of(&self, label: Label) -> f64 {
        match label {
            Label::Positive => self.p_positive,
            Label::Negative => 1.0 - self.p_positive,
        }
    }

    pub fn predicted(&self, threshold: f64) -> Label {
        if self.p_positive >= threshold {
            Label::Positive
        } else {
            Label::Negative
        }
    }
}
