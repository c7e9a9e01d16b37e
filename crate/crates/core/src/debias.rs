//! Rewriting of flagged paragraphs at three prompt levels, and re-scoring of
//! the rewrites.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::corpus::{Paragraph, ParagraphId};
use crate::detection::{
    assess_paragraph, run_with_reprompt, AssessmentCause, AssessmentFailed, AssessmentRecord,
    ParseError,
};
use crate::llm_gateway::{extract_json, Gateway};
use crate::prompt;

const PROMPT_HEAD: &str = r#"Instructions:

1. Input Analysis: Carefully analyze the full paragraph given that contains racial bias against certain racial or religious groups (e.g. African Americans, LatinX or Hispanics, Asians, Muslims, immigrants, native Americans or indigenous people, refugees, Middle Eastern, minorities, and other marginalized racial groups you can think of) in crime reporting.
"#;

const OUTPUT_GENERATION_ITEMS: &str = r#"    - Maintains all factual information from the original
    - Removes identified racial biases
    - Apply neutral descriptors that avoid racial connotations
    - Remove emotional language that reinforces racial stereotypes
    - Preserves the original meaning and intent where appropriate
    - Reads naturally and maintains coherent flow
"#;

const PRESERVATION_ITEMS: &str = r#"    - Core events and actions
    - Relevant context and details
    - Verified facts and statistics
"#;

const OUTPUT_FIELDS_BASE: &str = r#"Output the result as a valid JSON object with the following fields:

{
    "Rewritten Full Paragraph": "[remove bias for the paragraph only]",
    "Transformation Summary": "[explanation of changes made in less than 5 words]",
    "Preservation Analysis": "[explanation of how factual information was preserved]""#;

const QUOTE_HANDLING_L2: &str = r#"3. Quote and Citied Material: When encountering quotes or other cited material that contains bias:
    - Use indirect attribution to convey the content without the biased language (e.g., "The witness described the suspects..." instead of directly quoting biased descriptions)
    - Apply selective quoting by only using direct quotes for unbiased portions and paraphrasing biased segments
    - For article titles with inflammatory or biased language, describe the general topic of the article instead of quoting the full title (e.g., "He shared an article with anti-Muslim content" instead of reproducing a biased headline)
"#;

const QUOTE_HANDLING_L3: &str = r#"3. Quote and Title Handling: When encountering quotes, article titles, or other cited material that contains bias:
    - Completely reformulate biased article titles without directly quoting them (e.g., "He shared an article containing inflammatory content" instead of reproducing a biased headline)
    - Use indirect attribution and focus on behavior rather than identity or target group (e.g., "The individual made inappropriate comments" instead of "The individual used racial slurs toward [group]")
    - Apply selective quoting by only using direct quotes for unbiased portions and paraphrasing biased segments
    - Avoid repeating or closely paraphrasing charged terminology even when describing it

4. Language Selection:
    - Use neutral, factual language that avoids both explicit and implicit references to race, ethnicity, or religion when describing negative actions
    - Focus on actions and behaviors rather than motivations when those motivations involve bias
    - Abstract references to highly charged incidents, movements, or figures when they carry strong racial connotations
"#;

/// Instruction block for prompt level 1, 2 or 3.
pub fn debias_instructions(level: PromptLevel) -> String {
    let mut s = String::from(PROMPT_HEAD);
    // Level 2 spells the field name in lower case.
    let preserved_name = match level {
        PromptLevel::Two => "rewritten Full Paragraph",
        _ => "Rewritten Full Paragraph",
    };
    s.push_str(&format!(
        "\n2. Preservation Requirements: Identify factual information that must be preserved in the {preserved_name}:\n"
    ));
    s.push_str(PRESERVATION_ITEMS);
    let output_step = match level {
        PromptLevel::One => 3,
        PromptLevel::Two => {
            s.push('\n');
            s.push_str(QUOTE_HANDLING_L2);
            4
        }
        PromptLevel::Three => {
            s.push('\n');
            s.push_str(QUOTE_HANDLING_L3);
            5
        }
    };
    s.push_str(&format!(
        "\n{output_step}. Output Generation: Provide the complete Rewritten Full Paragraph that:\n"
    ));
    s.push_str(OUTPUT_GENERATION_ITEMS);
    s.push('\n');
    s.push_str(OUTPUT_FIELDS_BASE);
    if level == PromptLevel::Three {
        s.push_str(",\n    \"Contain Cited Materials\":\"[does the original paragraph contains quotes or cited materials?]: yes/no\"");
    }
    s.push_str("\n}");
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PromptLevel {
    One,
    Two,
    Three,
}

impl PromptLevel {
    pub const ALL: [PromptLevel; 3] = [PromptLevel::One, PromptLevel::Two, PromptLevel::Three];

    pub fn as_u8(self) -> u8 {
        match self {
            PromptLevel::One => 1,
            PromptLevel::Two => 2,
            PromptLevel::Three => 3,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("prompt level must be 1, 2 or 3 (got {0})")]
pub struct InvalidLevel(pub u8);

impl TryFrom<u8> for PromptLevel {
    type Error = InvalidLevel;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            1 => Ok(PromptLevel::One),
            2 => Ok(PromptLevel::Two),
            3 => Ok(PromptLevel::Three),
            other => Err(InvalidLevel(other)),
        }
    }
}

impl Serialize for PromptLevel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(self.as_u8())
    }
}

impl<'de> Deserialize<'de> for PromptLevel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        PromptLevel::try_from(u8::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

pub fn build_debias_prompt(p: &Paragraph, level: PromptLevel) -> String {
    prompt::frame(&debias_instructions(level), &p.text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RewriteFlag {
    /// Transformation summary has five or more words.
    SummaryTooLong,
    /// Rewrite quotes a span of five or more words that the original lacks.
    InventedQuote,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DebiasResult {
    pub paragraph_id: ParagraphId,
    pub prompt_level: PromptLevel,
    pub original_text: String,
    pub rewritten_text: String,
    pub transformation_summary: String,
    pub preservation_analysis: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains_cited_materials: Option<bool>,
    pub pre_score: u8,
    pub post_score: Option<u8>,
    pub model_id: String,
    #[serde(default)]
    pub rewrite_flags: BTreeSet<RewriteFlag>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Error)]
#[error("debiasing {paragraph_id} at level {prompt_level:?} failed: {cause}")]
pub struct DebiasFailed {
    pub paragraph_id: ParagraphId,
    pub prompt_level: PromptLevel,
    pub cause: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlaggedParagraph {
    pub paragraph: Paragraph,
    pub pre_score: u8,
}

/// Paragraphs scored 1 or 2, ordered by paragraph id.
pub fn select_flagged(records: &[AssessmentRecord]) -> Vec<FlaggedParagraph> {
    let mut out: Vec<FlaggedParagraph> = records
        .iter()
        .filter_map(|r| {
            let score = r.score()?;
            (score > 0).then(|| FlaggedParagraph {
                paragraph: r.paragraph(),
                pre_score: score,
            })
        })
        .collect();
    out.sort_by(|a, b| a.paragraph.paragraph_id.cmp(&b.paragraph.paragraph_id));
    out
}

fn word_count(s: &str) -> usize {
    s.split_whitespace().count()
}

fn quoted_spans(text: &str) -> Vec<&str> {
    crate::llm_gateway::mock::quote_spans(text)
        .into_iter()
        .map(|(s, e)| {
            let inner = &text[s..e];
            let open = inner.chars().next().map_or(0, char::len_utf8);
            let close = inner.chars().next_back().map_or(0, char::len_utf8);
            &inner[open..inner.len().saturating_sub(close).max(open)]
        })
        .collect()
}

/// Whether `rewritten` contains a double-quoted span of at least five words
/// absent (after whitespace normalisation) from `original`.
pub fn has_invented_quote(original: &str, rewritten: &str) -> bool {
    let haystack = crate::detection::normalize_whitespace(original);
    quoted_spans(rewritten).into_iter().any(|span| {
        word_count(span) >= 5 && !haystack.contains(&crate::detection::normalize_whitespace(span))
    })
}

fn field_str(doc: &Value, name: &'static str) -> Option<String> {
    let obj = doc.as_object()?;
    let wanted: String = name.chars().filter(|c| c.is_alphanumeric()).collect::<String>().to_lowercase();
    let v = obj.get(name).or_else(|| {
        obj.iter()
            .find(|(k, _)| {
                k.chars().filter(|c| c.is_alphanumeric()).collect::<String>().to_lowercase() == wanted
            })
            .map(|(_, v)| v)
    })?;
    match v {
        Value::String(s) => Some(s.trim().to_string()),
        Value::Bool(b) => Some(if *b { "yes" } else { "no" }.to_string()),
        Value::Null => None,
        other => Some(other.to_string()),
    }
}

/// Reads the yes/no answer at the end of a "Contain Cited Materials" value,
/// which models sometimes prefix with the question text.
fn cited_answer(s: &str) -> Option<bool> {
    let last = s
        .rsplit(|c: char| !c.is_alphanumeric())
        .find(|w| !w.is_empty())?
        .to_ascii_lowercase();
    match last.as_str() {
        "yes" | "true" => Some(true),
        "no" | "false" => Some(false),
        _ => None,
    }
}

/// Validates a rewrite document for `flagged` at `level`.
pub fn parse_debias(
    doc: &Value,
    flagged: &FlaggedParagraph,
    level: PromptLevel,
    model_id: &str,
) -> Result<DebiasResult, ParseError> {
    let rewritten = field_str(doc, "Rewritten Full Paragraph")
        .filter(|s| !s.is_empty())
        .ok_or(ParseError::SchemaError("Rewritten Full Paragraph"))?;
    let summary = field_str(doc, "Transformation Summary").unwrap_or_default();
    let analysis = field_str(doc, "Preservation Analysis").unwrap_or_default();
    let contains_cited_materials = match level {
        PromptLevel::Three => Some(
            field_str(doc, "Contain Cited Materials")
                .as_deref()
                .and_then(cited_answer)
                .ok_or(ParseError::SchemaError("Contain Cited Materials"))?,
        ),
        _ => None,
    };

    let mut flags = BTreeSet::new();
    if word_count(&summary) >= 5 {
        flags.insert(RewriteFlag::SummaryTooLong);
    }
    if level != PromptLevel::One && has_invented_quote(&flagged.paragraph.text, &rewritten) {
        flags.insert(RewriteFlag::InventedQuote);
    }

    Ok(DebiasResult {
        paragraph_id: flagged.paragraph.paragraph_id.clone(),
        prompt_level: level,
        original_text: flagged.paragraph.text.clone(),
        rewritten_text: rewritten,
        transformation_summary: summary,
        preservation_analysis: analysis,
        contains_cited_materials,
        pre_score: flagged.pre_score,
        post_score: None,
        model_id: model_id.to_string(),
        rewrite_flags: flags,
    })
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("paragraph {0} was not flagged (pre-score must be 1 or 2)")]
pub struct NotFlagged(pub ParagraphId);

pub fn debias_paragraph(
    flagged: &FlaggedParagraph,
    level: PromptLevel,
    gateway: &Gateway,
) -> Result<DebiasResult, DebiasFailed> {
    let fail = |cause: String| DebiasFailed {
        paragraph_id: flagged.paragraph.paragraph_id.clone(),
        prompt_level: level,
        cause,
    };
    if !(1..=2).contains(&flagged.pre_score) {
        return Err(fail(NotFlagged(flagged.paragraph.paragraph_id.clone()).to_string()));
    }
    let model_id = gateway.model_id();
    run_with_reprompt(gateway, &build_debias_prompt(&flagged.paragraph, level), |raw| {
        let doc = extract_json(raw).map_err(AssessmentCause::from)?;
        Ok(parse_debias(&doc, flagged, level, model_id)?)
    })
    .map_err(|cause| fail(cause.to_string()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum DebiasOutcome {
    Ok(DebiasResult),
    Failed(DebiasFailed),
}

pub fn debias_all(
    flagged: &[FlaggedParagraph],
    level: PromptLevel,
    gateway: &Gateway,
    workers: usize,
) -> Vec<DebiasOutcome> {
    crate::fanout::map_ordered(flagged, workers, |f| match debias_paragraph(f, level, gateway) {
        Ok(r) => DebiasOutcome::Ok(r),
        Err(e) => {
            log::warn!("{e}");
            DebiasOutcome::Failed(e)
        }
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Reassessment {
    pub results: Vec<DebiasResult>,
    pub failures: Vec<AssessmentFailed>,
}

/// Scores every rewrite with the detector behind `gateway`.
pub fn reassess(results: &[DebiasResult], gateway: &Gateway, workers: usize) -> Reassessment {
    let scores = crate::fanout::map_ordered(results, workers, |r| {
        let p = Paragraph {
            paragraph_id: r.paragraph_id.clone(),
            text: r.rewritten_text.clone(),
        };
        assess_paragraph(&p, gateway)
    });
    let mut out = Reassessment::default();
    for (r, score) in results.iter().zip(scores) {
        let mut r = r.clone();
        match score {
            Ok(a) => r.post_score = Some(a.score),
            Err(f) => {
                log::warn!("{f}");
                r.post_score = None;
                out.failures.push(f);
            }
        }
        out.results.push(r);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualCell {
    pub prompt_level: PromptLevel,
    pub pre_score: u8,
    pub n_results: usize,
    pub n_unbiased: usize,
    /// `None` when the cell has no results.
    pub rate: Option<f64>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ResidualError {
    #[error("results without post_score: {0:?}")]
    MissingPostScore(Vec<String>),
}

/// Fraction of rewrites with post-score 0, per (level, pre-score) cell.
/// All six cells are returned; empty ones have `rate: None`.
pub fn residual_bias_rates(results: &[DebiasResult]) -> Result<Vec<ResidualCell>, ResidualError> {
    let missing: Vec<String> = results
        .iter()
        .filter(|r| r.post_score.is_none())
        .map(|r| r.paragraph_id.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(ResidualError::MissingPostScore(missing));
    }
    let mut counts: BTreeMap<(PromptLevel, u8), (usize, usize)> = BTreeMap::new();
    for level in PromptLevel::ALL {
        for pre in [1, 2] {
            counts.insert((level, pre), (0, 0));
        }
    }
    for r in results {
        let cell = counts.entry((r.prompt_level, r.pre_score)).or_default();
        cell.0 += 1;
        if r.post_score == Some(0) {
            cell.1 += 1;
        }
    }
    Ok(counts
        .into_iter()
        .map(|((prompt_level, pre_score), (n, clean))| ResidualCell {
            prompt_level,
            pre_score,
            n_results: n,
            n_unbiased: clean,
            rate: (n > 0).then(|| clean as f64 / n as f64),
        })
        .collect())
}
