use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::LlmError;
use crate::kb::{render_context, ContextSnippet};

/// Placeholder replaced by the rendered knowledge-base context.
pub const CONTEXT_SLOT: &str = "{kb_context}";

const POSITIVE_LINE: &str = "probability of covid-19 symptoms";
const NEGATIVE_LINE: &str = "probability of no covid-19 symptoms";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptTemplate {
    pub id: String,
    pub system_text: String,
    /// Placeholder inside `system_text` where context goes, if supported.
    #[serde(default)]
    pub context_slot: Option<String>,
}

impl PromptTemplate {
    pub fn validate(&self) -> Result<(), LlmError> {
        let lower = self.system_text.to_lowercase();
        if !lower.contains(POSITIVE_LINE) || !lower.contains(NEGATIVE_LINE) {
            return Err(LlmError::Template(format!(
                "template `{}` must contain both probability output lines",
                self.id
            )));
        }
        if let Some(slot) = &self.context_slot {
            if slot.is_empty() || !self.system_text.contains(slot.as_str()) {
                return Err(LlmError::Template(format!(
                    "template `{}` declares context slot `{slot}` but its text lacks it",
                    self.id
                )));
            }
        }
        Ok(())
    }

    /// Short radiologist instruction with the two-line output format.
    pub fn radiologist_brief() -> Self {
        Self {
            id: "radiologist_brief".into(),
            system_text: format!(
                "You are an assistant radiologist, ready to dissect medical cases and give medical insights. \
                 You must give a probability that the provided x-ray shows Covid-19 symptoms. \
                 You must also give a probability that the provided x-ray shows someone with no Covid-19 symptoms. \
                 Assume that any recommendations you give will then be verified by a human radiologist.\n\
                 {CONTEXT_SLOT}\n\n\
                 Output in the format:\n\n\
                 Probability of Covid-19 symptoms based on imaging: Approximately __\n\
                 Probability of no Covid-19 symptoms based on imaging: Approximately __"
            ),
            context_slot: Some(CONTEXT_SLOT.into()),
        }
    }

    /// Detailed radiological instruction; the default template.
    pub fn radiologist_detailed() -> Self {
        Self {
            id: "radiologist_detailed".into(),
            system_text: format!(
                "You are an assistant radiologist trained in interpreting chest X-ray images for signs of COVID-19. \
                 Your task is to analyze the provided chest X-ray and estimate the likelihood that it shows signs \
                 consistent with COVID-19 infection.\n\n\
                 You must provide:\n\n\
                 A probability (in percentage) that the X-ray image indicates COVID-19-related symptoms \
                 (e.g., ground-glass opacities, bilateral infiltrates, or consolidation).\n\n\
                 A probability (in percentage) that the X-ray image shows no signs of COVID-19-related symptoms.\n\n\
                 Assume your analysis will be reviewed by a qualified human radiologist before informing any \
                 clinical decisions. Base your assessment solely on the imaging evidence.\n\n\
                 {CONTEXT_SLOT}\n\n\
                 Output format:\n\
                 Probability of COVID-19 symptoms based on imaging: Approximately __%\n\
                 Probability of no COVID-19 symptoms based on imaging: Approximately __%"
            ),
            context_slot: Some(CONTEXT_SLOT.into()),
        }
    }

    pub fn builtin() -> Vec<Self> {
        vec![Self::radiologist_detailed(), Self::radiologist_brief()]
    }

    /// Text with the slot filled, or removed together with its trailing
    /// blank line when there is no context.
    pub fn render(&self, context: Option<&ContextSnippet>) -> Result<String, LlmError> {
        self.validate()?;
        match (&self.context_slot, context) {
            (None, Some(_)) => Err(LlmError::Template(format!(
                "template `{}` has no context slot",
                self.id
            ))),
            (None, None) => Ok(self.system_text.clone()),
            (Some(slot), Some(snippet)) => {
                Ok(self.system_text.replacen(slot.as_str(), &render_context(snippet), 1))
            }
            (Some(slot), None) => {
                let with_gap = format!("{slot}\n\n");
                Ok(if self.system_text.contains(&with_gap) {
                    self.system_text.replacen(&with_gap, "", 1)
                } else {
                    self.system_text.replacen(slot.as_str(), "", 1)
                })
            }
        }
    }
}

/// What is sent to an endpoint: instructions plus one inline image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestPayload {
    pub template_id: String,
    pub system_text: String,
    pub image_mime: String,
    pub image_base64: String,
}

impl RequestPayload {
    pub fn image_attached(&self) -> bool {
        !self.image_base64.is_empty()
    }

    /// Chat-completion request body with the image as a data URL part.
    pub fn to_wire(&self, model: &str) -> serde_json::Value {
        let mut user_parts = Vec::new();
        if self.image_attached() {
            user_parts.push(json!({
                "type": "image_url",
                "image_url": {
                    "url": format!("data:{};base64,{}", self.image_mime, self.image_base64)
                }
            }));
        }
        json!({
            "model": model,
            "messages": [
                {"role": "system", "content": self.system_text},
                {"role": "user", "content": user_parts},
            ]
        })
    }
}

/// Builds the request for one image, substituting `context` when given.
pub fn build_prompt(
    template: &PromptTemplate,
    image_bytes: &[u8],
    context: Option<&ContextSnippet>,
) -> Result<RequestPayload, LlmError> {
    if image_bytes.is_empty() {
        return Err(LlmError::InputFormat("empty image".into()));
    }
    let format = image::guess_format(image_bytes).map_err(|e| LlmError::InputFormat(e.to_string()))?;
    let mime = match format {
        image::ImageFormat::Png => "image/png",
        image::ImageFormat::Jpeg => "image/jpeg",
        other => return Err(LlmError::InputFormat(format!("unsupported image format {other:?}"))),
    };
    image::load_from_memory_with_format(image_bytes, format)
        .map_err(|e| LlmError::InputFormat(e.to_string()))?;
    Ok(RequestPayload {
        template_id: template.id.clone(),
        system_text: template.render(context)?,
        image_mime: mime.into(),
        image_base64: base64::engine::general_purpose::STANDARD.encode(image_bytes),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnosis::Label;
    use crate::kb::Neighbor;

    fn png() -> Vec<u8> {
        let mut out = std::io::Cursor::new(Vec::new());
        image::DynamicImage::from(image::GrayImage::new(4, 4))
            .write_to(&mut out, image::ImageFormat::Png)
            .unwrap();
        out.into_inner()
    }

    const BRIEF_VERBATIM: &str = "You are an assistant radiologist, ready to dissect medical cases and give medical insights. You must give a probability that the provided x-ray shows Covid-19 symptoms. You must also give a probability that the provided x-ray shows someone with no Covid-19 symptoms. Assume that any recommendations you give will then be verified by a human radiologist.\nOutput in the format:\n\nProbability of Covid-19 symptoms based on imaging: Approximately __\nProbability of no Covid-19 symptoms based on imaging: Approximately __";

    #[test]
    fn brief_template_without_context_is_verbatim() {
        let p = build_prompt(&PromptTemplate::radiologist_brief(), &png(), None).unwrap();
        assert_eq!(p.system_text, BRIEF_VERBATIM);
        assert_eq!(p.image_mime, "image/png");
    }

    #[test]
    fn detailed_template_without_context_has_no_placeholder() {
        let p = build_prompt(&PromptTemplate::radiologist_detailed(), &png(), None).unwrap();
        assert!(!p.system_text.contains(CONTEXT_SLOT));
        assert!(p
            .system_text
            .contains("imaging evidence.\n\nOutput format:\nProbability of COVID-19"));
        assert!(p.system_text.ends_with("Approximately __%"));
    }

    #[test]
    fn context_is_substituted() {
        let snippet = ContextSnippet {
            k: 3,
            neighbors: vec![
                Neighbor { similarity: 0.97, label: Label::Positive },
                Neighbor { similarity: 0.95, label: Label::Positive },
                Neighbor { similarity: 0.91, label: Label::Negative },
            ],
        };
        let p = build_prompt(&PromptTemplate::radiologist_brief(), &png(), Some(&snippet)).unwrap();
        let lines: Vec<_> = p
            .system_text
            .lines()
            .filter(|l| l.starts_with("Reference case"))
            .collect();
        assert_eq!(
            lines,
            [
                "Reference case 1: cosine similarity 0.970, confirmed COVID-19 positive",
                "Reference case 2: cosine similarity 0.950, confirmed COVID-19 positive",
                "Reference case 3: cosine similarity 0.910, confirmed COVID-19 negative",
            ]
        );
        assert!(!p.system_text.contains(CONTEXT_SLOT));
    }

    #[test]
    fn context_without_slot_is_template_error() {
        let mut t = PromptTemplate::radiologist_brief();
        t.system_text = t.system_text.replace(&format!("{CONTEXT_SLOT}\n\n"), "");
        t.context_slot = None;
        let snippet = ContextSnippet { k: 3, neighbors: vec![] };
        assert!(matches!(
            build_prompt(&t, &png(), Some(&snippet)),
            Err(LlmError::Template(_))
        ));
        assert!(build_prompt(&t, &png(), None).is_ok());
    }

    #[test]
    fn template_needs_both_output_lines() {
        let t = PromptTemplate {
            id: "free".into(),
            system_text: "You must give a probability that the provided x-ray shows Covid-19 symptoms.".into(),
            context_slot: None,
        };
        assert!(matches!(t.validate(), Err(LlmError::Template(_))));
    }

    #[test]
    fn empty_or_bad_image_rejected() {
        let t = PromptTemplate::radiologist_detailed();
        assert!(matches!(build_prompt(&t, b"", None), Err(LlmError::InputFormat(_))));
        assert!(matches!(build_prompt(&t, b"GIF89a....", None), Err(LlmError::InputFormat(_))));
    }

    #[test]
    fn wire_body_attaches_image_once() {
        let p = build_prompt(&PromptTemplate::radiologist_detailed(), &png(), None).unwrap();
        let body = p.to_wire("gpt-test");
        let text = body.to_string();
        assert_eq!(text.matches("\"image_url\":{").count(), 1);
        assert_eq!(body["messages"][0]["content"], p.system_text);
        assert!(body["messages"][1]["content"][0]["image_url"]["url"]
            .as_str()
            .unwrap()
            .starts_with("data:image/png;base64,"));
    }
}
