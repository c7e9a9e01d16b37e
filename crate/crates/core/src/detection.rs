//! Paragraph bias scoring on the 0/1/2 scale.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::corpus::{Article, Paragraph, ParagraphId};
use crate::llm_gateway::{extract_json, ExtractError, Gateway, GatewayError};
use crate::prompt;

/// Detection instructions, sent verbatim ahead of the paragraph.
pub const DETECTION_INSTRUCTIONS: &str = r#"Instructions:

1. Topic Identification: Identify the main topic of the text in one or two words.
2. Bias Detection: Assess whether the writing styles or the narrative exhibit any form of bias against certain racial or religious groups (e.g. African Americans, LatinX or Hispanics, Asians, Muslims, immigrants, native Americans or indigenous people, refugees, Middle Eastern, minorities, and other marginalized racial groups you can think of). Choose either 'yes' or 'no'. Do not choose anything else.
3. Bias Scoring: Rate the level of bias on a scale of 0-2.
    - Level 0: Negligible bias or no bias detected. Content shows balanced representation and fair treatment of all racial groups, using neutral language and avoiding stereotypes.
    - Level 1: Moderate bias. Content contains subtle stereotypes, generalizations about racial groups, or imbalanced representation, but without overtly discriminatory language.
    - Level 2: Extreme bias. Content exhibits explicit racial prejudice, uses derogatory language, promotes harmful stereotypes, or contains clear discriminatory statements about racial groups.
4. Evidence Identification: Extract specific full sentences that exhibit bias, separating them by '&'. Avoid selecting partial or paraphrased sentences.
5. Bias Justification: Provide a brief explanation for why each sentence is considered biased, including references to stereotypical terms, exclusionary language, or specific tone, separated by '&'.
6. Bias Summary: Summarize the overall reason for the bias in less than 5 words.
7. Bias Removal: Briefly explain how you rewrite the biased sentence to mitigate the bias.

Note that only detect race related bias in crime. IGNORE other biases that are not related to race and report no bias detected.

Output the result as a valid JSON object with the following fields:

{
    "Main Topic": "[chosen topic]",
    "Bias Detected": "[yes/no]",
    "Bias Score": "[0-2]",
    "Biased Sentences": "[sentences separated by '&']",
    "Bias Justification": "[justifications separated by '&']",
    "Bias Summary": "[summary in less than 5 words]",
    "Bias Removal": "[how you would mitigate biases]"
}"#;

/// The three levels of the scoring scale.
pub const SCORE_SCALE: [(u8, &str); 3] = [
    (0, "negligible or no bias"),
    (1, "moderate bias"),
    (2, "extreme bias"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ConsistencyFlag {
    DetectedScoreMismatch,
    EvidenceNotVerbatim,
    CountMismatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BiasAssessment {
    pub paragraph_id: ParagraphId,
    pub model_id: String,
    pub main_topic: String,
    pub bias_detected: bool,
    pub score: u8,
    /// The raw score was outside {0,1,2} or fractional and got clamped.
    #[serde(default)]
    pub score_clamped: bool,
    pub biased_sentences: Vec<String>,
    pub justifications: Vec<String>,
    pub summary: String,
    pub removal_hint: String,
    pub consistency_flags: BTreeSet<ConsistencyFlag>,
    pub raw_response_digest: String,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("response is missing required field `{0}`")]
    SchemaError(&'static str),
    #[error("unparseable bias score `{0}`")]
    ScoreUnparseable(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssessmentCause {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    Parse(#[from] ParseError),
}

/// Terminal failure for one paragraph; recorded, never fatal to a batch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Error)]
#[error("assessment of {paragraph_id} failed: {cause}")]
pub struct AssessmentFailed {
    pub paragraph_id: ParagraphId,
    pub model_id: String,
    pub cause: String,
}

pub fn build_detection_prompt(p: &Paragraph) -> String {
    prompt::frame(DETECTION_INSTRUCTIONS, &p.text)
}

/// Collapses whitespace runs to one space and trims.
pub fn normalize_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn key_form(k: &str) -> String {
    k.chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

/// Looks up a field by name, tolerating case, spacing and punctuation drift.
fn field<'a>(doc: &'a Value, name: &str) -> Option<&'a Value> {
    let obj = doc.as_object()?;
    obj.get(name).or_else(|| {
        let wanted = key_form(name);
        obj.iter().find(|(k, _)| key_form(k) == wanted).map(|(_, v)| v)
    })
}

fn text_field(doc: &Value, name: &str) -> String {
    match field(doc, name) {
        Some(Value::String(s)) => s.trim().to_string(),
        Some(Value::Null) | None => String::new(),
        Some(other) => other.to_string(),
    }
}

/// Splits an `&`-separated list, trimming and dropping empty items.
/// Arrays of strings are accepted as already split.
fn list_field(doc: &Value, name: &str) -> Vec<String> {
    let split = |s: &str| -> Vec<String> {
        s.split('&')
            .map(str::trim)
            .filter(|x| !x.is_empty())
            .map(str::to_string)
            .collect()
    };
    match field(doc, name) {
        Some(Value::String(s)) => split(s),
        Some(Value::Array(items)) => items
            .iter()
            .filter_map(Value::as_str)
            .flat_map(split)
            .collect(),
        _ => Vec::new(),
    }
}

/// `(score, clamped)` from a number or numeric string.
pub fn coerce_score(v: &Value) -> Result<(u8, bool), ParseError> {
    let raw = match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse::<f64>().ok(),
        _ => None,
    };
    let x = raw
        .filter(|x| x.is_finite())
        .ok_or_else(|| ParseError::ScoreUnparseable(v.to_string()))?;
    let clamped = x.round().clamp(0.0, 2.0);
    Ok((clamped as u8, clamped != x))
}

fn coerce_yes_no(v: Option<&Value>) -> Option<bool> {
    match v? {
        Value::Bool(b) => Some(*b),
        Value::String(s) => match s.trim().trim_matches(|c: char| !c.is_alphanumeric()).to_ascii_lowercase().as_str() {
            "yes" | "y" | "true" => Some(true),
            "no" | "n" | "false" => Some(false),
            _ => None,
        },
        _ => None,
    }
}

/// Normalises a model's detection document for paragraph `p`.
///
/// The score is authoritative: a disagreeing yes/no answer is overwritten
/// and flagged. `raw_response_digest` is left empty for the caller.
pub fn parse_assessment(doc: &Value, p: &Paragraph, model_id: &str) -> Result<BiasAssessment, ParseError> {
    let score_value = field(doc, "Bias Score").ok_or(ParseError::SchemaError("Bias Score"))?;
    if score_value.is_null() {
        return Err(ParseError::SchemaError("Bias Score"));
    }
    let (score, score_clamped) = coerce_score(score_value)?;

    let mut flags = BTreeSet::new();
    let detected_answer = coerce_yes_no(field(doc, "Bias Detected"));
    if detected_answer.is_some_and(|d| d != (score > 0)) {
        flags.insert(ConsistencyFlag::DetectedScoreMismatch);
    }

    let biased_sentences = list_field(doc, "Biased Sentences");
    let justifications = list_field(doc, "Bias Justification");
    if biased_sentences.len() != justifications.len() || (score > 0 && biased_sentences.is_empty()) {
        flags.insert(ConsistencyFlag::CountMismatch);
    }

    let haystack = normalize_whitespace(&p.text);
    if biased_sentences
        .iter()
        .any(|s| !haystack.contains(&normalize_whitespace(s)))
    {
        flags.insert(ConsistencyFlag::EvidenceNotVerbatim);
    }

    Ok(BiasAssessment {
        paragraph_id: p.paragraph_id.clone(),
        model_id: model_id.to_string(),
        main_topic: text_field(doc, "Main Topic"),
        bias_detected: score > 0,
        score,
        score_clamped,
        biased_sentences,
        justifications,
        summary: text_field(doc, "Bias Summary"),
        removal_hint: text_field(doc, "Bias Removal"),
        consistency_flags: flags,
        raw_response_digest: String::new(),
    })
}

/// Parses one raw reply end to end.
pub fn assessment_from_raw(raw: &str, p: &Paragraph, model_id: &str) -> Result<BiasAssessment, AssessmentCause> {
    let doc = extract_json(raw)?;
    let mut a = parse_assessment(&doc, p, model_id)?;
    a.raw_response_digest = crate::sha256_hex(raw.as_bytes());
    Ok(a)
}

/// Runs a prompt, re-asking once with a JSON-only reminder when the reply
/// cannot be parsed. Provider errors are not re-asked (the gateway already
/// retried them).
pub(crate) fn run_with_reprompt<T>(
    gateway: &Gateway,
    prompt_text: &str,
    parse: impl Fn(&str) -> Result<T, AssessmentCause>,
) -> Result<T, AssessmentCause> {
    let first = gateway.complete_prompt(prompt_text)?;
    match parse(&first.raw_text) {
        Ok(v) => Ok(v),
        Err(AssessmentCause::Gateway(e)) => Err(e.into()),
        Err(first_err) => {
            log::debug!("unparseable reply ({first_err}); re-prompting once");
            let second = gateway.complete_prompt(&prompt::with_json_reminder(prompt_text))?;
            parse(&second.raw_text)
        }
    }
}

pub fn assess_paragraph(p: &Paragraph, gateway: &Gateway) -> Result<BiasAssessment, AssessmentFailed> {
    let model_id = gateway.model_id();
    run_with_reprompt(gateway, &build_detection_prompt(p), |raw| {
        assessment_from_raw(raw, p, model_id)
    })
    .map_err(|cause| AssessmentFailed {
        paragraph_id: p.paragraph_id.clone(),
        model_id: model_id.to_string(),
        cause: cause.to_string(),
    })
}

/// Paragraph context carried alongside every record so later stages can
/// work from the assessment file alone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParagraphMeta {
    pub publisher: String,
    pub publish_date: chrono::NaiveDate,
    pub text: String,
}

impl ParagraphMeta {
    pub fn year(&self) -> i32 {
        use chrono::Datelike;
        self.publish_date.year()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Ok(BiasAssessment),
    Failed(AssessmentFailed),
}

/// One terminal line of an assessment file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssessmentRecord {
    pub paragraph_id: ParagraphId,
    #[serde(flatten)]
    pub meta: ParagraphMeta,
    pub outcome: Outcome,
}

impl AssessmentRecord {
    pub fn assessment(&self) -> Option<&BiasAssessment> {
        match &self.outcome {
            Outcome::Ok(a) => Some(a),
            Outcome::Failed(_) => None,
        }
    }

    pub fn score(&self) -> Option<u8> {
        self.assessment().map(|a| a.score)
    }

    pub fn paragraph(&self) -> Paragraph {
        Paragraph {
            paragraph_id: self.paragraph_id.clone(),
            text: self.meta.text.clone(),
        }
    }
}

/// A paragraph queued for scoring together with its article context.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoringInput {
    pub paragraph: Paragraph,
    pub meta: ParagraphMeta,
}

impl ScoringInput {
    pub fn from_article(article: &Article) -> Vec<ScoringInput> {
        crate::corpus::segment_paragraphs(article)
            .into_iter()
            .map(|p| ScoringInput {
                meta: ParagraphMeta {
                    publisher: article.publisher.clone(),
                    publish_date: article.publish_date,
                    text: p.text.clone(),
                },
                paragraph: p,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AssessmentSet {
    pub records: Vec<AssessmentRecord>,
}

impl AssessmentSet {
    pub fn failures(&self) -> impl Iterator<Item = &AssessmentFailed> {
        self.records.iter().filter_map(|r| match &r.outcome {
            Outcome::Failed(f) => Some(f),
            Outcome::Ok(_) => None,
        })
    }

    pub fn failure_rate(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.failures().count() as f64 / self.records.len() as f64
    }

    pub fn exceeds_failure_threshold(&self, threshold: f64) -> bool {
        self.failure_rate() > threshold
    }
}

pub const DEFAULT_FAILURE_THRESHOLD: f64 = 0.05;

/// Scores every input with up to `workers` concurrent requests. Output has
/// exactly one record per input, sorted by paragraph id.
pub fn assess_corpus(inputs: &[ScoringInput], gateway: &Gateway, workers: usize) -> AssessmentSet {
    let outcomes = crate::fanout::map_ordered(inputs, workers, |input| {
        match assess_paragraph(&input.paragraph, gateway) {
            Ok(a) => Outcome::Ok(a),
            Err(f) => {
                log::warn!("{f}");
                Outcome::Failed(f)
            }
        }
    });
    let mut records: Vec<AssessmentRecord> = inputs
        .iter()
        .zip(outcomes)
        .map(|(input, outcome)| AssessmentRecord {
            paragraph_id: input.paragraph.paragraph_id.clone(),
            meta: input.meta.clone(),
            outcome,
        })
        .collect();
    records.sort_by(|a, b| a.paragraph_id.cmp(&b.paragraph_id));
    AssessmentSet { records }
}
