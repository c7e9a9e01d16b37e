//! Comparison of model output with human annotations: detection metrics,
//! residual bias after rewriting, and original/rewrite similarity.

pub mod annotations;
pub mod metrics;
pub mod tables;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::welch::{welch_t_test, WelchResult};
use crate::corpus::ParagraphId;
use crate::debias::{DebiasResult, PromptLevel};
use crate::detection::AssessmentRecord;
use crate::llm_gateway::{Gateway, GatewayError};

pub use annotations::{AnnotationRecord, Task, Variant};
pub use metrics::{AlphaLevel, KappaWeighting, MetricError, TieRule};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("missing data for {} item(s): {}", .0.len(), preview(.0))]
    CoverageGap(Vec<String>),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("embedding failed for {paragraph_id}: {source}")]
    Embedding {
        paragraph_id: String,
        #[source]
        source: GatewayError,
    },
}

fn preview(ids: &[String]) -> String {
    let mut s = ids.iter().take(5).cloned().collect::<Vec<_>>().join(", ");
    if ids.len() > 5 {
        s.push_str(", ...");
    }
    s
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub paragraph_id: ParagraphId,
    pub variant: Variant,
    pub majority_score: u8,
    /// Votes for scores 0, 1 and 2.
    pub vote_histogram: [usize; 3],
    pub tie_broken: bool,
}

/// Majority-vote reference labels for one variant's bias-score judgments.
pub fn ground_truth(
    annotations: &[AnnotationRecord],
    variant: Variant,
    rule: TieRule,
) -> BTreeMap<ParagraphId, GroundTruth> {
    annotations::group(annotations, Task::BiasScore)
        .into_iter()
        .filter(|((_, v), _)| *v == variant)
        .map(|((id, v), values)| {
            let votes: Vec<u8> = values.iter().map(|&x| x as u8).collect();
            let mut hist = [0usize; 3];
            for &v in &votes {
                hist[v as usize] += 1;
            }
            let (majority_score, tie_broken) =
                metrics::majority_vote(&votes, rule).expect("grouped values are non-empty");
            (
                id.clone(),
                GroundTruth {
                    paragraph_id: id,
                    variant: v,
                    majority_score,
                    vote_histogram: hist,
                    tie_broken,
                },
            )
        })
        .collect()
}

/// Who the model is compared with when computing alpha.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaRaters {
    /// Two raters per item: the model and the majority label.
    #[default]
    ModelVsMajority,
    /// The model plus every individual annotator.
    ModelVsAnnotators,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricOptions {
    pub alpha_level: AlphaLevel,
    pub alpha_raters: AlphaRaters,
    pub kappa_weighting: KappaWeighting,
    pub f_beta: f64,
    /// Labels strictly above this count as positive for F-beta.
    pub positive_above: u8,
    pub tie_rule: TieRule,
    /// Drop annotated items without an assessment instead of failing.
    #[serde(default)]
    pub allow_gaps: bool,
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self {
            alpha_level: AlphaLevel::Nominal,
            alpha_raters: AlphaRaters::ModelVsMajority,
            kappa_weighting: KappaWeighting::None,
            f_beta: 2.0,
            positive_above: 0,
            tie_rule: TieRule::HigherSeverity,
            allow_gaps: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model_id: String,
    pub exact_match: f64,
    pub krippendorff_alpha: f64,
    /// `None` when kappa is undefined (degenerate marginals).
    pub cohen_kappa: Option<f64>,
    pub f2: f64,
    pub n_items: usize,
    pub n_ties: usize,
    pub n_skipped: usize,
    pub metric_options: MetricOptions,
}

/// Scores one model's assessments against majority-vote ground truth on the
/// original paragraphs.
pub fn detection_report(
    records: &[AssessmentRecord],
    annotations: &[AnnotationRecord],
    options: &MetricOptions,
) -> Result<MetricsReport, EvalError> {
    let truth = ground_truth(annotations, Variant::Original, options.tie_rule);
    let raw_votes = annotations::group(annotations, Task::BiasScore);
    let scored: BTreeMap<&ParagraphId, u8> = records
        .iter()
        .filter_map(|r| r.score().map(|s| (&r.paragraph_id, s)))
        .collect();
    let model_id = records
        .iter()
        .find_map(|r| r.assessment().map(|a| a.model_id.clone()))
        .unwrap_or_default();

    let gaps: Vec<String> = truth
        .keys()
        .filter(|id| !scored.contains_key(id))
        .map(ToString::to_string)
        .collect();
    if !gaps.is_empty() && !options.allow_gaps {
        return Err(EvalError::CoverageGap(gaps));
    }

    let mut pred = Vec::new();
    let mut gold = Vec::new();
    let mut units = Vec::new();
    let mut ties = 0;
    for (id, gt) in &truth {
        let Some(&score) = scored.get(id) else { continue };
        pred.push(score);
        gold.push(gt.majority_score);
        ties += usize::from(gt.tie_broken);
        units.push(match options.alpha_raters {
            AlphaRaters::ModelVsMajority => vec![Some(score), Some(gt.majority_score)],
            AlphaRaters::ModelVsAnnotators => std::iter::once(Some(score))
                .chain(
                    raw_votes[&(id.clone(), Variant::Original)]
                        .iter()
                        .map(|&v| Some(v as u8)),
                )
                .collect(),
        });
    }
    if pred.is_empty() {
        return Err(EvalError::Metric(MetricError::InsufficientData(
            "no paragraph has both an assessment and annotations",
        )));
    }

    let kappa = match metrics::cohen_kappa(&pred, &gold, options.kappa_weighting) {
        Ok(k) => Some(k),
        Err(MetricError::DegenerateMarginals) => None,
        Err(e) => return Err(e.into()),
    };

    Ok(MetricsReport {
        model_id,
        exact_match: metrics::exact_match_rate(&pred, &gold)?,
        krippendorff_alpha: metrics::krippendorff_alpha(&units, options.alpha_level)?,
        cohen_kappa: kappa,
        f2: metrics::fbeta(
            &binarize(&pred, options.positive_above),
            &binarize(&gold, options.positive_above),
            options.f_beta,
        )?,
        n_items: pred.len(),
        n_ties: ties,
        n_skipped: gaps.len(),
        metric_options: *options,
    })
}

fn binarize(labels: &[u8], above: u8) -> Vec<u8> {
    labels.iter().map(|&l| u8::from(l > above)).collect()
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityRow {
    pub prompt_level: PromptLevel,
    pub n_pairs: usize,
    /// Mean over items of each item's mean annotator score (-2..=2).
    pub mean_human_similarity: Option<f64>,
    pub n_human_items: usize,
    pub mean_cosine: Option<f64>,
    pub n_cosine_pairs: usize,
}

/// Per-level similarity of originals and rewrites, by annotators and by
/// embedding cosine.
pub fn similarity_report(
    results: &[DebiasResult],
    annotations: &[AnnotationRecord],
    embedder: Option<&Gateway>,
) -> Result<Vec<SimilarityRow>, EvalError> {
    let human = annotations::group(annotations, Task::Similarity);
    let mut by_level: BTreeMap<PromptLevel, Vec<&DebiasResult>> = BTreeMap::new();
    for r in results {
        by_level.entry(r.prompt_level).or_default().push(r);
    }

    let mut gaps = Vec::new();
    let mut rows = Vec::new();
    for (level, mut items) in by_level {
        items.sort_by(|a, b| a.paragraph_id.cmp(&b.paragraph_id));
        let mut human_means = Vec::new();
        let mut cosines = Vec::new();
        for r in &items {
            let votes = human.get(&(r.paragraph_id.clone(), Variant::debiased(level)));
            if let Some(v) = votes {
                human_means.push(v.iter().map(|&x| f64::from(x)).sum::<f64>() / v.len() as f64);
            }
            match embedder {
                Some(gw) => {
                    let embed = |text: &str| {
                        gw.embed(text).map_err(|source| EvalError::Embedding {
                            paragraph_id: r.paragraph_id.to_string(),
                            source,
                        })
                    };
                    let a = embed(&r.original_text)?;
                    let b = embed(&r.rewritten_text)?;
                    cosines.push(metrics::cosine_similarity(&a.values, &b.values)?);
                }
                None if votes.is_none() => gaps.push(format!("{}@level{}", r.paragraph_id, level.as_u8())),
                None => {}
            }
        }
        rows.push(SimilarityRow {
            prompt_level: level,
            n_pairs: items.len(),
            mean_human_similarity: mean(&human_means),
            n_human_items: human_means.len(),
            mean_cosine: mean(&cosines),
            n_cosine_pairs: cosines.len(),
        });
    }
    if !gaps.is_empty() {
        return Err(EvalError::CoverageGap(gaps));
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Judge {
    Human,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebiasBiasRow {
    pub prompt_level: PromptLevel,
    pub judge: Judge,
    pub mean_pre_score: Option<f64>,
    pub n_pre: usize,
    pub mean_post_score: Option<f64>,
    pub n_post: usize,
    /// Welch test of pre- against post-debiasing scores.
    pub pre_vs_post: Option<WelchResult>,
}

/// Mean bias before and after rewriting, per level and judge. The human
/// judge uses per-item majority votes; the LLM judge uses pre/post scores.
pub fn debias_bias_report(
    results: &[DebiasResult],
    annotations: &[AnnotationRecord],
    rule: TieRule,
) -> Result<Vec<DebiasBiasRow>, EvalError> {
    let original = ground_truth(annotations, Variant::Original, rule);
    let mut rows = Vec::new();
    let mut gaps = Vec::new();
    let levels: BTreeSet<PromptLevel> = results.iter().map(|r| r.prompt_level).collect();
    for level in levels {
        let debiased = ground_truth(annotations, Variant::debiased(level), rule);
        let mut items: Vec<&DebiasResult> = results.iter().filter(|r| r.prompt_level == level).collect();
        items.sort_by(|a, b| a.paragraph_id.cmp(&b.paragraph_id));

        let (mut h_pre, mut h_post, mut l_pre, mut l_post) = (vec![], vec![], vec![], vec![]);
        for r in &items {
            let human_post = debiased.get(&r.paragraph_id);
            if r.post_score.is_none() && human_post.is_none() {
                gaps.push(format!("{}@level{}", r.paragraph_id, level.as_u8()));
            }
            if let Some(gt) = original.get(&r.paragraph_id) {
                h_pre.push(f64::from(gt.majority_score));
            }
            if let Some(gt) = human_post {
                h_post.push(f64::from(gt.majority_score));
            }
            l_pre.push(f64::from(r.pre_score));
            if let Some(s) = r.post_score {
                l_post.push(f64::from(s));
            }
        }
        for (judge, pre, post) in [(Judge::Human, h_pre, h_post), (Judge::Llm, l_pre, l_post)] {
            rows.push(DebiasBiasRow {
                prompt_level: level,
                judge,
                mean_pre_score: mean(&pre),
                n_pre: pre.len(),
                mean_post_score: mean(&post),
                n_post: post.len(),
                pre_vs_post: welch_t_test(&pre, &post).ok(),
            });
        }
    }
    if !gaps.is_empty() {
        return Err(EvalError::CoverageGap(gaps));
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualJudgedCell {
    pub prompt_level: PromptLevel,
    pub judge: Judge,
    pub pre_score: u8,
    pub n_results: usize,
    pub n_unbiased: usize,
    pub rate: Option<f64>,
}

/// Share of rewrites judged fully unbiased, split by the original LLM
/// flag (moderate = 1, extreme = 2), for both judges.
pub fn residual_report(
    results: &[DebiasResult],
    annotations: &[AnnotationRecord],
    rule: TieRule,
) -> Vec<ResidualJudgedCell> {
    let mut cells = Vec::new();
    for level in PromptLevel::ALL {
        let debiased = ground_truth(annotations, Variant::debiased(level), rule);
        for judge in [Judge::Human, Judge::Llm] {
            for pre in [1u8, 2] {
                let posts: Vec<u8> = results
                    .iter()
                    .filter(|r| r.prompt_level == level && r.pre_score == pre)
                    .filter_map(|r| match judge {
                        Judge::Llm => r.post_score,
                        Judge::Human => debiased.get(&r.paragraph_id).map(|g| g.majority_score),
                    })
                    .collect();
                let clean = posts.iter().filter(|&&p| p == 0).count();
                cells.push(ResidualJudgedCell {
                    prompt_level: level,
                    judge,
                    pre_score: pre,
                    n_results: posts.len(),
                    n_unbiased: clean,
                    rate: (!posts.is_empty()).then(|| clean as f64 / posts.len() as f64),
                });
            }
        }
    }
    cells
}
