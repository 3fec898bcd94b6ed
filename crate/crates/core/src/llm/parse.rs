use std::sync::LazyLock;

use regex::Regex;

use super::LlmError;
use crate::diagnosis::{Diagnosis, PARSED_SUM_TOLERANCE};

/// Maximum allowed `|X + Y - 100|` in percentage points.
pub const PERCENT_PAIR_TOLERANCE: f64 = 5.0;

static LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?ix)
        probability \s+ of \s+ (?P<no>no \s+)?
        covid [\s\-‐‑]* 19 (?:[\s\-]+related)? \s+
        symptoms \s+ based \s+ on \s+ imaging \s* [:\-–—]? \s*
        (?:approximately|approx\.?|about|around|roughly|~)? \s*
        (?P<lo>\d+(?:\.\d+)?) \s* %? \s*
        (?: (?:-|‐|‑|–|—|to) \s* (?P<hi>\d+(?:\.\d+)?) \s* %? )?
        ",
    )
    .expect("probability line pattern compiles")
});

static REFUSAL: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)\b(i'?m sorry|i am sorry|i can(?:no|')t|i cannot|unable to (?:provide|assess|determine|interpret)|not able to (?:provide|assess|determine)|can(?:no|')t provide)",
    )
    .expect("refusal pattern compiles")
});

static PERCENT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\d+(?:\.\d+)?\s*%").expect("percent pattern compiles"));

/// Percentage on the first line of the requested kind, with ranges
/// collapsed to their midpoint.
fn find_percent(text: &str, negative: bool) -> Option<Result<f64, ()>> {
    LINE.captures_iter(text)
        .find(|c| c.name("no").is_some() == negative)
        .map(|c| {
            let lo: f64 = c["lo"].parse().map_err(|_| ())?;
            let value = match c.name("hi") {
                Some(hi) => {
                    let hi: f64 = hi.as_str().parse().map_err(|_| ())?;
                    (lo + hi) / 2.0
                }
                None => lo,
            };
            if (0.0..=100.0).contains(&value) {
                Ok(value)
            } else {
                Err(())
            }
        })
}

/// Extracts the two probability lines from an LLM answer.
pub fn parse_probabilities(raw_text: &str) -> Result<Diagnosis, LlmError> {
    // markdown emphasis around numbers is common
    let text = raw_text.replace(['*', '_'], "");
    let parse_err = || LlmError::Parse {
        raw: raw_text.to_string(),
    };
    let positive = find_percent(&text, false).ok_or_else(parse_err)?.map_err(|_| parse_err())?;
    let negative = find_percent(&text, true).ok_or_else(parse_err)?.map_err(|_| parse_err())?;
    if (positive + negative - 100.0).abs() > PERCENT_PAIR_TOLERANCE {
        return Err(LlmError::Inconsistent {
            positive,
            negative,
            raw: raw_text.to_string(),
        });
    }
    Diagnosis::new(positive / 100.0, negative / 100.0, PARSED_SUM_TOLERANCE).map_err(|_| {
        LlmError::Inconsistent {
            positive,
            negative,
            raw: raw_text.to_string(),
        }
    })
}

/// The answer format requested by the built-in templates.
pub fn render_answer(positive_percent: f64, negative_percent: f64) -> String {
    format!(
        "Probability of COVID-19 symptoms based on imaging: Approximately {positive_percent}%\n\
         Probability of no COVID-19 symptoms based on imaging: Approximately {negative_percent}%"
    )
}

/// How an answer was scored.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Scored(Diagnosis),
    /// The model declined to give a probability.
    Refusal,
    /// The answer could not be parsed, or its two values disagree.
    Unparseable(LlmError),
}

/// Parses an answer, separating refusals from malformed answers. A reply is
/// a refusal when it contains no percentage and uses declining language.
pub fn interpret_response(raw_text: &str) -> Outcome {
    match parse_probabilities(raw_text) {
        Ok(d) => Outcome::Scored(d),
        Err(e) => {
            if !PERCENT.is_match(raw_text) && REFUSAL.is_match(raw_text) {
                Outcome::Refusal
            } else {
                Outcome::Unparseable(e)
            }
        }
    }
}
