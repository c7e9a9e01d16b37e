//! Deterministic offline provider.
//!
//! Rule version [`MOCK_RULE_VERSION`]:
//!
//! * score 2 if the paragraph contains an extreme-lexicon phrase, 1 if it
//!   contains a moderate-lexicon phrase, 0 otherwise (ASCII case-insensitive,
//!   whole-word, leftmost-longest matching);
//! * detection replies carry every sentence containing a lexicon phrase as
//!   evidence;
//! * debias replies substitute each phrase with its neutral replacement.
//!   Level 1 leaves phrases inside double-quoted spans alone; levels 2 and 3
//!   also rewrite those spans and drop their quote marks (indirect
//!   attribution);
//! * embeddings are L2-normalised counts of character trigrams hashed
//!   (FNV-1a, 64 bit) into [`MOCK_EMBEDDING_DIM`] buckets.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::prompt::framed_paragraph;

pub const MOCK_RULE_VERSION: &str = "mock-rule-v1";
pub const MOCK_EMBEDDING_DIM: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LexiconEntry {
    pub phrase: &'static str,
    pub severity: u8,
    pub neutral: &'static str,
}

const fn entry(phrase: &'static str, severity: u8, neutral: &'static str) -> LexiconEntry {
    LexiconEntry {
        phrase,
        severity,
        neutral,
    }
}

pub const LEXICON: &[LexiconEntry] = &[
    entry("thugs", 2, "suspects"),
    entry("savages", 2, "individuals"),
    entry("invaders", 2, "migrants"),
    entry("vermin", 2, "residents"),
    entry("animals from the ghetto", 2, "people from the area"),
    entry("illegal aliens", 1, "undocumented immigrants"),
    entry("ghetto", 1, "neighborhood"),
    entry("inner-city youths", 1, "young people"),
    entry("hordes", 1, "groups"),
    entry("gang-bangers", 1, "gang members"),
    entry("welfare queens", 1, "benefit recipients"),
    entry("urban youths", 1, "young people"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhraseMatch {
    pub start: usize,
    pub end: usize,
    pub entry: LexiconEntry,
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

/// Non-overlapping lexicon matches in document order.
pub fn find_phrases(text: &str) -> Vec<PhraseMatch> {
    let mut by_len: Vec<&LexiconEntry> = LEXICON.iter().collect();
    by_len.sort_by_key(|e| std::cmp::Reverse(e.phrase.len()));

    let mut out = Vec::new();
    let mut i = 0;
    while i < text.len() {
        if !text.is_char_boundary(i) {
            i += 1;
            continue;
        }
        let before_ok = text[..i].chars().next_back().is_none_or(|c| !is_word_char(c));
        let mut matched = None;
        if before_ok {
            for e in &by_len {
                let end = i + e.phrase.len();
                if end > text.len() || !text.is_char_boundary(end) {
                    continue;
                }
                if !text[i..end].eq_ignore_ascii_case(e.phrase) {
                    continue;
                }
                if text[end..].chars().next().is_none_or(|c| !is_word_char(c)) {
                    matched = Some(PhraseMatch {
                        start: i,
                        end,
                        entry: **e,
                    });
                    break;
                }
            }
        }
        match matched {
            Some(m) => {
                out.push(m);
                i = m.end;
            }
            None => i += 1,
        }
    }
    out
}

pub fn mock_score(text: &str) -> u8 {
    find_phrases(text)
        .iter()
        .map(|m| m.entry.severity)
        .max()
        .unwrap_or(0)
}

/// Byte ranges (including the marks) of closed double-quoted spans.
pub fn quote_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut straight: Option<usize> = None;
    let mut curly: Option<usize> = None;
    for (i, c) in text.char_indices() {
        match c {
            '"' => match straight.take() {
                Some(open) => spans.push((open, i + 1)),
                None => straight = Some(i),
            },
            '\u{201c}' => curly = Some(i),
            '\u{201d}' => {
                if let Some(open) = curly.take() {
                    spans.push((open, i + c.len_utf8()));
                }
            }
            _ => {}
        }
    }
    spans.sort();
    spans
}

pub fn has_quotes(text: &str) -> bool {
    text.contains(['"', '\u{201c}', '\u{201d}'])
}

fn capitalize_like(original: &str, replacement: &str) -> String {
    if original.chars().next().is_some_and(char::is_uppercase) {
        let mut chars = replacement.chars();
        match chars.next() {
            Some(first) => first.to_uppercase().chain(chars).collect(),
            None => String::new(),
        }
    } else {
        replacement.to_string()
    }
}

/// Mock rewrite at prompt level 1, 2 or 3.
pub fn mock_rewrite(text: &str, level: u8) -> String {
    let spans = quote_spans(text);
    let inside = |pos: usize| spans.iter().find(|&&(s, e)| pos >= s && pos < e).copied();

    let mut replace = Vec::new();
    let mut drop_marks: Vec<(usize, usize)> = Vec::new();
    for m in find_phrases(text) {
        match inside(m.start) {
            Some(span) if level >= 2 => {
                replace.push(m);
                if !drop_marks.iter().any(|&(s, _)| s == span.0) {
                    drop_marks.push(span);
                }
            }
            Some(_) => {}
            None => replace.push(m),
        }
    }

    // Quote-mark byte ranges removed in levels 2 and 3.
    let mut deletions: Vec<(usize, usize)> = Vec::new();
    for (s, e) in drop_marks {
        let open_len = text[s..].chars().next().map_or(1, char::len_utf8);
        let close_len = text[..e].chars().next_back().map_or(1, char::len_utf8);
        deletions.push((s, s + open_len));
        deletions.push((e - close_len, e));
    }

    let mut edits: Vec<(usize, usize, String)> = replace
        .into_iter()
        .map(|m| {
            let original = &text[m.start..m.end];
            (m.start, m.end, capitalize_like(original, m.entry.neutral))
        })
        .chain(deletions.into_iter().map(|(s, e)| (s, e, String::new())))
        .collect();
    edits.sort_by_key(|e| e.0);

    let mut out = String::with_capacity(text.len());
    let mut cursor = 0;
    for (s, e, with) in edits {
        out.push_str(&text[cursor..s]);
        out.push_str(&with);
        cursor = e;
    }
    out.push_str(&text[cursor..]);
    out
}

/// Sentences as verbatim slices of `text`.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut k = 0;
    while k < chars.len() {
        let (_, c) = chars[k];
        if matches!(c, '.' | '!' | '?') {
            let mut j = k + 1;
            while j < chars.len() && matches!(chars[j].1, '"' | '\u{201d}' | '\'' | ')') {
                j += 1;
            }
            if j == chars.len() || chars[j].1.is_whitespace() {
                let end = if j == chars.len() { text.len() } else { chars[j].0 };
                let s = text[start..end].trim();
                if !s.is_empty() {
                    out.push(s);
                }
                start = end;
                k = j;
                continue;
            }
        }
        k += 1;
    }
    let rest = text[start..].trim();
    if !rest.is_empty() {
        out.push(rest);
    }
    out
}

fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("strings serialise")
}

fn detection_reply(paragraph: &str) -> String {
    let score = mock_score(paragraph);
    let mut sentences = Vec::new();
    let mut justifications = Vec::new();
    for sentence in split_sentences(paragraph) {
        let hits = find_phrases(sentence);
        if hits.is_empty() {
            continue;
        }
        let terms: Vec<String> = hits
            .iter()
            .map(|m| format!("'{}'", &sentence[m.start..m.end]))
            .collect();
        sentences.push(sentence);
        justifications.push(format!("uses loaded term {}", terms.join(", ")));
    }
    let (summary, removal) = match score {
        0 => ("no bias detected", "no changes needed"),
        1 => ("subtle stereotyping language", "replace loaded terms with neutral descriptors"),
        _ => ("explicit derogatory language", "remove derogatory terms and describe actions neutrally"),
    };
    format!(
        "```json\n{{\n    \"Main Topic\": \"crime\",\n    \"Bias Detected\": \"{}\",\n    \"Bias Score\": \"{}\",\n    \"Biased Sentences\": {},\n    \"Bias Justification\": {},\n    \"Bias Summary\": {},\n    \"Bias Removal\": {}\n}}\n```",
        if score > 0 { "yes" } else { "no" },
        score,
        json_str(&sentences.join(" & ")),
        json_str(&justifications.join(" & ")),
        json_str(summary),
        json_str(removal),
    )
}

fn debias_reply(paragraph: &str, level: u8) -> String {
    let rewritten = mock_rewrite(paragraph, level);
    let summary = if rewritten == paragraph {
        "No changes needed"
    } else {
        "Replaced loaded terms"
    };
    let mut body = format!(
        "{{\n    \"Rewritten Full Paragraph\": {},\n    \"Transformation Summary\": {},\n    \"Preservation Analysis\": {}",
        json_str(&rewritten),
        json_str(summary),
        json_str("Names, places, dates and events were kept; only descriptive wording changed."),
    );
    if level == 3 {
        body.push_str(&format!(
            ",\n    \"Contain Cited Materials\": \"{}\"",
            if has_quotes(paragraph) { "yes" } else { "no" }
        ));
    }
    body.push_str("\n}");
    body
}

/// Which prompt a request carries, recognised by fixed instruction markers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptKind {
    Detection,
    Debias(u8),
    Unknown,
}

pub fn classify_prompt(prompt: &str) -> PromptKind {
    if prompt.contains("Bias Scoring: Rate the level of bias") {
        PromptKind::Detection
    } else if prompt.contains("\"Contain Cited Materials\"") {
        PromptKind::Debias(3)
    } else if prompt.contains("3. Quote and Citied Material:") {
        PromptKind::Debias(2)
    } else if prompt.contains("\"Rewritten Full Paragraph\"") {
        PromptKind::Debias(1)
    } else {
        PromptKind::Unknown
    }
}

/// Raw reply of the mock chat model.
pub fn respond(prompt: &str) -> String {
    let paragraph = framed_paragraph(prompt).unwrap_or(prompt);
    match classify_prompt(prompt) {
        PromptKind::Detection => detection_reply(paragraph),
        PromptKind::Debias(level) => debias_reply(paragraph, level),
        PromptKind::Unknown => {
            "I can only answer bias detection and rewriting requests.".to_string()
        }
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

pub fn mock_embedding(text: &str) -> Vec<f64> {
    let chars: Vec<char> = text.chars().collect();
    let mut counts = vec![0.0f64; MOCK_EMBEDDING_DIM];
    let mut bump = |gram: &[char]| {
        let s: String = gram.iter().collect();
        counts[(fnv1a64(s.as_bytes()) % MOCK_EMBEDDING_DIM as u64) as usize] += 1.0;
    };
    if chars.len() < 3 {
        bump(&chars);
    } else {
        chars.windows(3).for_each(&mut bump);
    }
    let norm = counts.iter().map(|c| c * c).sum::<f64>().sqrt();
    if norm > 0.0 {
        counts.iter_mut().for_each(|c| *c /= norm);
    }
    counts
}

/// Deterministic permanent-failure injection for the mock provider.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultInjection {
    /// Fraction of distinct paragraphs whose requests always fail.
    pub fail_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

impl FaultInjection {
    /// Whether requests about `key` (a paragraph text) fail.
    pub fn should_fail(&self, key: &str) -> bool {
        let mut bytes = self.seed.to_le_bytes().to_vec();
        bytes.extend_from_slice(key.as_bytes());
        let digest = crate::sha256_hex(&bytes);
        let bucket = u64::from_str_radix(&digest[..16], 16).expect("hex digest");
        (bucket as f64) < self.fail_fraction * (u64::MAX as f64)
    }
}

/// Parses the mock's own detection reply back to its score; used by tests
/// and by synthetic annotation generation.
pub fn reply_score(reply: &str) -> Option<u8> {
    let doc: Value = super::extract_json(reply).ok()?;
    doc.get("Bias Score")?.as_str()?.parse().ok()
}
