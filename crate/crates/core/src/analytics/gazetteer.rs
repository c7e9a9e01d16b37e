//! Lexicon-based attribution of articles to U.S. states.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Article;

pub const DEFAULT_GAZETTEER: &str = include_str!("states.txt");

/// Publication names that contain a state name. They are blanked out
/// before matching, together with the article's own publisher.
pub const DEFAULT_EXCLUSIONS: &[&str] = &[
    "The Washington Times",
    "Washington Times",
    "The Washington Post",
    "Washington Post",
    "The New York Times",
    "New York Times",
    "New York Post",
    "New York Daily News",
    "New York Magazine",
];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GazetteerError {
    #[error("line {line}: empty state name")]
    EmptyName { line: usize },
    #[error("line {line}: `{name}` already defined")]
    Duplicate { line: usize, name: String },
}

#[derive(Debug, Clone)]
pub struct Gazetteer {
    /// (surface form, canonical state), longest surface first.
    patterns: Vec<(String, String)>,
    states: Vec<String>,
    exclusions: Vec<String>,
}

impl Default for Gazetteer {
    fn default() -> Self {
        Self::parse(DEFAULT_GAZETTEER).expect("bundled gazetteer is valid")
    }
}

impl Gazetteer {
    /// Parses `State|Alias|...` lines. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, GazetteerError> {
        let mut patterns: Vec<(String, String)> = Vec::new();
        let mut states = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let names: Vec<&str> = line.split('|').map(str::trim).collect();
            if names.iter().any(|n| n.is_empty()) {
                return Err(GazetteerError::EmptyName { line: i + 1 });
            }
            let canonical = names[0].to_string();
            for n in names {
                if patterns.iter().any(|(p, _)| p == n) {
                    return Err(GazetteerError::Duplicate {
                        line: i + 1,
                        name: n.to_string(),
                    });
                }
                patterns.push((n.to_string(), canonical.clone()));
            }
            states.push(canonical);
        }
        patterns.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
        states.sort();
        Ok(Self {
            patterns,
            states,
            exclusions: DEFAULT_EXCLUSIONS.iter().map(|s| s.to_string()).collect(),
        })
    }

    pub fn with_exclusions(mut self, exclusions: Vec<String>) -> Self {
        self.exclusions = exclusions;
        self
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    /// Case-sensitive whole-word matches, leftmost-longest, returned as
    /// canonical state names in text order.
    pub fn find_states<'a>(&'a self, text: &str) -> Vec<&'a str> {
        let mut out = Vec::new();
        let mut i = 0;
        let mut prev_alnum = false;
        while i < text.len() {
            let rest = &text[i..];
            let c = rest.chars().next().expect("non-empty");
            if !prev_alnum && c.is_alphanumeric() {
                let hit = self.patterns.iter().find(|(p, _)| {
                    rest.starts_with(p.as_str())
                        && !rest[p.len()..].chars().next().is_some_and(char::is_alphanumeric)
                });
                if let Some((p, state)) = hit {
                    out.push(state.as_str());
                    i += p.len();
                    prev_alnum = true;
                    continue;
                }
            }
            prev_alnum = c.is_alphanumeric();
            i += c.len_utf8();
        }
        out
    }

    /// Blanks excluded names (and `publisher`) with spaces of equal length.
    pub fn strip_exclusions(&self, text: &str, publisher: &str) -> String {
        let mut s = text.to_string();
        let mut names: Vec<&str> = self.exclusions.iter().map(String::as_str).collect();
        if !publisher.is_empty() {
            names.push(publisher);
        }
        names.sort_by_key(|n| std::cmp::Reverse(n.len()));
        for n in names {
            if s.contains(n) {
                s = s.replace(n, &" ".repeat(n.len()));
            }
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchSource {
    Title,
    Body,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateTag {
    pub article_id: String,
    pub state: Option<String>,
    pub match_source: Option<MatchSource>,
    pub match_count: usize,
    /// Every state matched, with title and body counts, for auditing.
    pub all_matches: BTreeMap<String, (usize, usize)>,
}

/// Most frequent state over title and body. Ties go to the state seen more
/// often in the title, then alphabetically.
pub fn tag_state(article: &Article, gazetteer: &Gazetteer) -> StateTag {
    let mut counts: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    let title = gazetteer.strip_exclusions(&article.title, &article.publisher);
    let body = gazetteer.strip_exclusions(&article.body_text, &article.publisher);
    for s in gazetteer.find_states(&title) {
        counts.entry(s.to_string()).or_default().0 += 1;
    }
    for s in gazetteer.find_states(&body) {
        counts.entry(s.to_string()).or_default().1 += 1;
    }
    // Name comparison is reversed so the alphabetically first state wins.
    let best = counts
        .iter()
        .max_by(|(na, a), (nb, b)| {
            (a.0 + a.1)
                .cmp(&(b.0 + b.1))
                .then(a.0.cmp(&b.0))
                .then(nb.cmp(na))
        })
        .map(|(n, c)| (n.clone(), *c));
    if !counts.is_empty() {
        log::debug!(
            "state matches for {}: {:?}",
            article.article_id,
            counts
        );
    }
    match best {
        Some((state, (t, b))) => StateTag {
            article_id: article.article_id.clone(),
            state: Some(state),
            match_source: Some(if t > 0 { MatchSource::Title } else { MatchSource::Body }),
            match_count: t + b,
            all_matches: counts,
        },
        None => StateTag {
            article_id: article.article_id.clone(),
            state: None,
            match_source: None,
            match_count: 0,
            all_matches: counts,
        },
    }
}
