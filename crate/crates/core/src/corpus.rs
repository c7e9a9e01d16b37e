//! Article ingestion, validation and paragraph segmentation.
//!
//! On disk a corpus is `<root>/<publisher>/<file>.json`, one article per
//! file. Required keys are `publisher`, `date`, `title` and `text`;
//! `id`, `url` and `authors` are optional and anything else is ignored.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;
use thiserror::Error;

/// Accepted `date` layouts, tried in order.
const DATE_FORMATS: &[&str] = &["%Y-%m-%d", "%Y/%m/%d", "%B %d, %Y", "%d %B %Y"];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IngestError {
    #[error("missing required field `{0}`")]
    MissingField(&'static str),
    #[error("field `{0}` has the wrong type")]
    WrongType(&'static str),
    #[error("unparseable date `{0}`")]
    InvalidDate(String),
    #[error("date {date} outside accepted range {earliest}..={latest}")]
    DateOutOfRange {
        date: NaiveDate,
        earliest: NaiveDate,
        latest: NaiveDate,
    },
    #[error("article body is empty")]
    EmptyBody,
    #[error("article document is not an object")]
    NotAnObject,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus root `{0}` does not exist or is not a directory")]
    RootNotFound(PathBuf),
    #[error("reading `{path}`: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Article {
    pub article_id: String,
    pub publisher: String,
    pub url: String,
    pub publish_date: NaiveDate,
    pub authors: Vec<String>,
    pub title: String,
    pub body_text: String,
}

impl Article {
    pub fn year(&self) -> i32 {
        use chrono::Datelike;
        self.publish_date.year()
    }
}

/// Identifier of a paragraph: the owning article plus its zero-based index.
///
/// Rendered as `<article_id>#<index>`. Ordering is by article id and then
/// numerically by index, so `a#2` sorts before `a#10`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParagraphId {
    pub article_id: String,
    pub index: usize,
}

impl ParagraphId {
    pub fn new(article_id: impl Into<String>, index: usize) -> Self {
        Self {
            article_id: article_id.into(),
            index,
        }
    }
}

impl fmt::Display for ParagraphId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.article_id, self.index)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("malformed paragraph id `{0}`")]
pub struct ParseParagraphIdError(pub String);

impl FromStr for ParagraphId {
    type Err = ParseParagraphIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (article, index) = s
            .rsplit_once('#')
            .ok_or_else(|| ParseParagraphIdError(s.to_string()))?;
        if article.is_empty() {
            return Err(ParseParagraphIdError(s.to_string()));
        }
        let index = index
            .parse()
            .map_err(|_| ParseParagraphIdError(s.to_string()))?;
        Ok(ParagraphId::new(article, index))
    }
}

impl Serialize for ParagraphId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ParagraphId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Paragraph {
    pub paragraph_id: ParagraphId,
    pub text: String,
}

impl Paragraph {
    pub fn new(article_id: impl Into<String>, index: usize, text: impl Into<String>) -> Self {
        Self {
            paragraph_id: ParagraphId::new(article_id, index),
            text: text.into(),
        }
    }

    pub fn article_id(&self) -> &str {
        &self.paragraph_id.article_id
    }

    pub fn index(&self) -> usize {
        self.paragraph_id.index
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IngestOptions {
    pub earliest: NaiveDate,
    pub latest: NaiveDate,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            earliest: NaiveDate::from_ymd_opt(1990, 1, 1).expect("valid date"),
            latest: chrono::Local::now().date_naive(),
        }
    }
}

/// Parses one of the accepted date layouts.
pub fn parse_date(value: &str) -> Result<NaiveDate, IngestError> {
    let trimmed = value.trim();
    DATE_FORMATS
        .iter()
        .find_map(|fmt| NaiveDate::parse_from_str(trimmed, fmt).ok())
        .ok_or_else(|| IngestError::InvalidDate(value.to_string()))
}

/// Stable fallback identifier: the first 16 hex digits of
/// SHA-256(publisher ‖ 0x1F ‖ url ‖ 0x1F ‖ title) over UTF-8 bytes.
pub fn fallback_article_id(publisher: &str, url: &str, title: &str) -> String {
    let mut bytes = Vec::with_capacity(publisher.len() + url.len() + title.len() + 2);
    bytes.extend_from_slice(publisher.as_bytes());
    bytes.push(0x1f);
    bytes.extend_from_slice(url.as_bytes());
    bytes.push(0x1f);
    bytes.extend_from_slice(title.as_bytes());
    crate::sha256_hex(&bytes)[..16].to_string()
}

fn required_str<'a>(
    obj: &'a serde_json::Map<String, Value>,
    key: &'static str,
) -> Result<&'a str, IngestError> {
    match obj.get(key) {
        None | Some(Value::Null) => Err(IngestError::MissingField(key)),
        Some(Value::String(s)) => Ok(s),
        Some(_) => Err(IngestError::WrongType(key)),
    }
}

fn optional_str(
    obj: &serde_json::Map<String, Value>,
    key: &'static str,
) -> Result<Option<String>, IngestError> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(Value::Number(n)) if key == "id" => Ok(Some(n.to_string())),
        Some(_) => Err(IngestError::WrongType(key)),
    }
}

/// Validates a parsed article document.
pub fn ingest_article(raw: &Value, opts: &IngestOptions) -> Result<Article, IngestError> {
    let obj = raw.as_object().ok_or(IngestError::NotAnObject)?;

    let publisher = required_str(obj, "publisher")?.trim().to_string();
    let date = required_str(obj, "date")?;
    let title = required_str(obj, "title")?.to_string();
    let text = required_str(obj, "text")?;
    let url = optional_str(obj, "url")?.unwrap_or_default();

    let authors = match obj.get("authors") {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::String(s)) => vec![s.clone()],
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| v.as_str().map(str::to_string))
            .collect::<Option<Vec<_>>>()
            .ok_or(IngestError::WrongType("authors"))?,
        Some(_) => return Err(IngestError::WrongType("authors")),
    };

    let publish_date = parse_date(date)?;
    if publish_date < opts.earliest || publish_date > opts.latest {
        return Err(IngestError::DateOutOfRange {
            date: publish_date,
            earliest: opts.earliest,
            latest: opts.latest,
        });
    }

    let body_text = normalize_newlines(text);
    if body_text.trim().is_empty() {
        return Err(IngestError::EmptyBody);
    }

    let article_id = match optional_str(obj, "id")? {
        Some(id) if !id.trim().is_empty() => id.trim().to_string(),
        _ => fallback_article_id(&publisher, &url, &title),
    };

    Ok(Article {
        article_id,
        publisher,
        url,
        publish_date,
        authors,
        title,
        body_text,
    })
}

fn normalize_newlines(text: &str) -> String {
    text.replace("\r\n", "\n").replace('\r', "\n")
}

/// Splits an article body into paragraphs on runs of blank lines.
pub fn segment_paragraphs(article: &Article) -> Vec<Paragraph> {
    split_blocks(&article.body_text)
        .into_iter()
        .enumerate()
        .map(|(index, text)| Paragraph::new(article.article_id.clone(), index, text))
        .collect()
}

/// Block splitter behind [`segment_paragraphs`]. A blank line is a line that
/// is empty after trimming; blocks are trimmed and empty ones dropped.
pub fn split_blocks(text: &str) -> Vec<String> {
    let text = normalize_newlines(text);
    let mut blocks = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for line in text.split('\n') {
        if line.trim().is_empty() {
            flush_block(&mut current, &mut blocks);
        } else {
            current.push(line);
        }
    }
    flush_block(&mut current, &mut blocks);
    blocks
}

fn flush_block(current: &mut Vec<&str>, blocks: &mut Vec<String>) {
    if current.is_empty() {
        return;
    }
    let block = current.join("\n");
    let trimmed = block.trim();
    if !trimmed.is_empty() {
        blocks.push(trimmed.to_string());
    }
    current.clear();
}

/// A file that could not be turned into an article.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub path: PathBuf,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct LoadedCorpus {
    pub articles: Vec<Article>,
    pub diagnostics: Vec<Diagnostic>,
}

impl LoadedCorpus {
    /// All paragraphs of all articles, in corpus order.
    pub fn paragraphs(&self) -> Vec<Paragraph> {
        self.articles.iter().flat_map(segment_paragraphs).collect()
    }
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>, CorpusError> {
    let read = fs::read_dir(dir).map_err(|source| CorpusError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut paths = Vec::new();
    for entry in read {
        let entry = entry.map_err(|source| CorpusError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        paths.push(entry.path());
    }
    paths.sort();
    Ok(paths)
}

/// Loads every `<publisher>/<file>.json` under `root`.
///
/// Order is publisher directory name, then file name. Invalid files and
/// duplicate article ids become diagnostics instead of aborting the load.
pub fn load_corpus(root: &Path, opts: &IngestOptions) -> Result<LoadedCorpus, CorpusError> {
    if !root.is_dir() {
        return Err(CorpusError::RootNotFound(root.to_path_buf()));
    }
    let mut corpus = LoadedCorpus::default();
    let mut seen = HashSet::new();

    for publisher_dir in sorted_entries(root)? {
        if !publisher_dir.is_dir() {
            continue;
        }
        for path in sorted_entries(&publisher_dir)? {
            if path.extension().and_then(|e| e.to_str()) != Some("json") || !path.is_file() {
                continue;
            }
            match read_article(&path, opts) {
                Ok(article) => {
                    if seen.insert(article.article_id.clone()) {
                        corpus.articles.push(article);
                    } else {
                        let reason = format!("duplicate article id `{}`", article.article_id);
                        log::warn!("skipping {}: {}", path.display(), reason);
                        corpus.diagnostics.push(Diagnostic { path, reason });
                    }
                }
                Err(reason) => {
                    log::warn!("skipping {}: {}", path.display(), reason);
                    corpus.diagnostics.push(Diagnostic { path, reason });
                }
            }
        }
    }

    if corpus.articles.is_empty() && corpus.diagnostics.is_empty() {
        log::warn!("corpus root {} contains no article files", root.display());
    }
    Ok(corpus)
}

fn read_article(path: &Path, opts: &IngestOptions) -> Result<Article, String> {
    let bytes = fs::read(path).map_err(|e| format!("read error: {e}"))?;
    let value: Value = serde_json::from_slice(&bytes).map_err(|e| format!("invalid JSON: {e}"))?;
    ingest_article(&value, opts).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublisherCounts {
    pub articles: usize,
    pub paragraphs: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub article_count: usize,
    pub paragraph_count: usize,
    pub per_publisher_counts: BTreeMap<String, PublisherCounts>,
    pub date_range: Option<(NaiveDate, NaiveDate)>,
}

pub fn corpus_stats<'a, I>(articles: I) -> CorpusStats
where
    I: IntoIterator<Item = &'a Article>,
{
    let mut stats = CorpusStats::default();
    for article in articles {
        let paragraphs = segment_paragraphs(article).len();
        stats.article_count += 1;
        stats.paragraph_count += paragraphs;
        let entry = stats
            .per_publisher_counts
            .entry(article.publisher.clone())
            .or_default();
        entry.articles += 1;
        entry.paragraphs += paragraphs;
        let date = article.publish_date;
        stats.date_range = Some(match stats.date_range {
            None => (date, date),
            Some((lo, hi)) => (lo.min(date), hi.max(date)),
        });
    }
    stats
}
