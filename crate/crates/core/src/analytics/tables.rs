//! Publisher × year and state × year aggregations of paragraph scores.
//!
//! Only paragraphs with a successful assessment count. An article is
//! "biased" when at least one of its scored paragraphs scored above 0.
//! Rows with `year = None` aggregate over all years.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::gazetteer::StateTag;
use super::welch::{welch_t_test, WelchResult};
use crate::corpus::Article;
use crate::detection::AssessmentRecord;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("{} assessed paragraph(s) have no article in the corpus: {}", .0.len(), .0.iter().take(5).cloned().collect::<Vec<_>>().join(", "))]
pub struct JoinGap(pub Vec<String>);

/// 100 × num / den, the one expression used for every percentage cell.
pub fn percent(num: usize, den: usize) -> f64 {
    100.0 * (num as f64 / den as f64)
}

#[derive(Debug, Clone, Default)]
struct ArticleScores<'a> {
    article: Option<&'a Article>,
    scores: Vec<u8>,
}

impl ArticleScores<'_> {
    fn biased(&self) -> bool {
        self.scores.iter().any(|&s| s > 0)
    }
    fn sum(&self) -> u64 {
        self.scores.iter().map(|&s| u64::from(s)).sum()
    }
}

/// Scored paragraphs grouped by article, in article-id order.
fn join<'a>(
    records: &[AssessmentRecord],
    articles: &'a [Article],
) -> Result<BTreeMap<&'a str, ArticleScores<'a>>, JoinGap> {
    let index: HashMap<&str, &Article> = articles.iter().map(|a| (a.article_id.as_str(), a)).collect();
    let mut out: BTreeMap<&str, ArticleScores> = BTreeMap::new();
    let mut gaps = Vec::new();
    for r in records {
        let Some(score) = r.score() else { continue };
        match index.get(r.paragraph_id.article_id.as_str()) {
            Some(a) => {
                let e = out.entry(a.article_id.as_str()).or_default();
                e.article = Some(a);
                e.scores.push(score);
            }
            None => gaps.push(r.paragraph_id.to_string()),
        }
    }
    if gaps.is_empty() {
        Ok(out)
    } else {
        gaps.sort();
        Err(JoinGap(gaps))
    }
}

#[derive(Debug, Default)]
struct Acc {
    n_articles: usize,
    n_biased_articles: usize,
    n_paragraphs: usize,
    n_biased_paragraphs: usize,
    score_sum: u64,
    article_means: Vec<f64>,
}

impl Acc {
    fn add(&mut self, a: &ArticleScores) {
        self.n_articles += 1;
        self.n_biased_articles += usize::from(a.biased());
        self.n_paragraphs += a.scores.len();
        self.n_biased_paragraphs += a.scores.iter().filter(|&&s| s > 0).count();
        self.score_sum += a.sum();
        self.article_means.push(a.sum() as f64 / a.scores.len() as f64);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublisherYearCell {
    pub publisher: String,
    pub year: Option<i32>,
    pub n_articles: usize,
    pub n_biased_articles: usize,
    pub pct_articles_biased: f64,
    pub n_paragraphs: usize,
    pub n_biased_paragraphs: usize,
    pub mean_paragraph_score: f64,
    /// Mean over articles of each article's mean paragraph score.
    pub mean_article_score: f64,
}

pub fn publisher_year_table(
    records: &[AssessmentRecord],
    articles: &[Article],
) -> Result<Vec<PublisherYearCell>, JoinGap> {
    let joined = join(records, articles)?;
    let mut acc: BTreeMap<(String, Option<i32>), Acc> = BTreeMap::new();
    for scores in joined.values() {
        let a = scores.article.expect("joined");
        for year in [Some(a.year()), None] {
            acc.entry((a.publisher.clone(), year)).or_default().add(scores);
        }
    }
    Ok(acc
        .into_iter()
        .map(|((publisher, year), c)| PublisherYearCell {
            publisher,
            year,
            n_articles: c.n_articles,
            n_biased_articles: c.n_biased_articles,
            pct_articles_biased: percent(c.n_biased_articles, c.n_articles),
            n_paragraphs: c.n_paragraphs,
            n_biased_paragraphs: c.n_biased_paragraphs,
            mean_paragraph_score: c.score_sum as f64 / c.n_paragraphs as f64,
            mean_article_score: c.article_means.iter().sum::<f64>() / c.n_articles as f64,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateYearCell {
    pub state: String,
    pub year: Option<i32>,
    pub n_paragraphs: usize,
    pub n_biased_paragraphs: usize,
    pub pct_paragraphs_biased: f64,
    pub n_articles: usize,
    pub n_biased_articles: usize,
    pub pct_articles_biased: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UntaggedArticle {
    pub article_id: String,
    pub publisher: String,
    pub year: i32,
    pub title: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateYearTable {
    pub cells: Vec<StateYearCell>,
    pub untagged: Vec<UntaggedArticle>,
    /// Articles with at least one scored paragraph.
    pub n_articles_total: usize,
}

pub fn state_year_table(
    records: &[AssessmentRecord],
    articles: &[Article],
    tags: &[StateTag],
) -> Result<StateYearTable, JoinGap> {
    let joined = join(records, articles)?;
    let tag_of: HashMap<&str, &str> = tags
        .iter()
        .filter_map(|t| t.state.as_deref().map(|s| (t.article_id.as_str(), s)))
        .collect();
    let mut acc: BTreeMap<(String, Option<i32>), Acc> = BTreeMap::new();
    let mut untagged = Vec::new();
    for (id, scores) in &joined {
        let a = scores.article.expect("joined");
        match tag_of.get(id) {
            Some(state) => {
                for year in [Some(a.year()), None] {
                    acc.entry((state.to_string(), year)).or_default().add(scores);
                }
            }
            None => untagged.push(UntaggedArticle {
                article_id: a.article_id.clone(),
                publisher: a.publisher.clone(),
                year: a.year(),
                title: a.title.clone(),
            }),
        }
    }
    Ok(StateYearTable {
        cells: acc
            .into_iter()
            .map(|((state, year), c)| StateYearCell {
                state,
                year,
                n_paragraphs: c.n_paragraphs,
                n_biased_paragraphs: c.n_biased_paragraphs,
                pct_paragraphs_biased: percent(c.n_biased_paragraphs, c.n_paragraphs),
                n_articles: c.n_articles,
                n_biased_articles: c.n_biased_articles,
                pct_articles_biased: percent(c.n_biased_articles, c.n_articles),
            })
            .collect(),
        untagged,
        n_articles_total: joined.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTest {
    pub publisher_a: String,
    pub publisher_b: String,
    /// `None` when either publisher has fewer than two scored paragraphs.
    pub result: Option<WelchResult>,
}

/// Welch tests on per-paragraph scores for every unordered publisher pair,
/// with `publisher_a < publisher_b`.
pub fn pairwise_publisher_test(records: &[AssessmentRecord]) -> Vec<PairwiseTest> {
    let mut by_pub: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut sorted: Vec<&AssessmentRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.paragraph_id.cmp(&b.paragraph_id));
    for r in sorted {
        if let Some(s) = r.score() {
            by_pub.entry(r.meta.publisher.as_str()).or_default().push(f64::from(s));
        }
    }
    let pubs: Vec<(&str, Vec<f64>)> = by_pub.into_iter().collect();
    let mut out = Vec::new();
    for (i, (a, xa)) in pubs.iter().enumerate() {
        for (b, xb) in &pubs[i + 1..] {
            let result = match welch_t_test(xa, xb) {
                Ok(r) => Some(r),
                Err(e) => {
                    log::warn!("pairwise test {a} vs {b} skipped: {e}");
                    None
                }
            };
            out.push(PairwiseTest {
                publisher_a: a.to_string(),
                publisher_b: b.to_string(),
                result,
            });
        }
    }
    out
}
