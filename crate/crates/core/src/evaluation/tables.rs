//! Summary tables in the layout used for publication: detection agreement
//! per model, residual bias after rewriting, and rewrite similarity.

use serde::{Deserialize, Serialize};

use super::{Judge, MetricsReport, ResidualJudgedCell, SimilarityRow};
use crate::debias::PromptLevel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Table1Row {
    pub model: String,
    pub exact_match_pct: f64,
    pub krippendorff_alpha: f64,
    pub cohen_kappa: Option<f64>,
    pub f2_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Table1 {
    pub rows: Vec<Table1Row>,
}

impl Table1 {
    pub fn from_reports<'a>(reports: impl IntoIterator<Item = &'a MetricsReport>) -> Self {
        Self {
            rows: reports
                .into_iter()
                .map(|r| Table1Row {
                    model: r.model_id.clone(),
                    exact_match_pct: 100.0 * r.exact_match,
                    krippendorff_alpha: r.krippendorff_alpha,
                    cohen_kappa: r.cohen_kappa,
                    f2_score: r.f2,
                })
                .collect(),
        }
    }
}

pub fn prompt_label(level: PromptLevel) -> String {
    format!("Prompt {}", level.as_u8())
}

/// Percent of rewrites judged unbiased, for paragraphs originally flagged
/// moderate (1) or extreme (2).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Table2Row {
    pub prompt: String,
    pub human_moderate_pct: Option<f64>,
    pub human_extreme_pct: Option<f64>,
    pub llm_moderate_pct: Option<f64>,
    pub llm_extreme_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Table2 {
    pub rows: Vec<Table2Row>,
}

impl Table2 {
    pub fn from_cells(cells: &[ResidualJudgedCell]) -> Self {
        let pct = |level, judge, pre| {
            cells
                .iter()
                .find(|c| c.prompt_level == level && c.judge == judge && c.pre_score == pre)
                .and_then(|c| c.rate)
                .map(|r| 100.0 * r)
        };
        Self {
            rows: PromptLevel::ALL
                .iter()
                .map(|&l| Table2Row {
                    prompt: prompt_label(l),
                    human_moderate_pct: pct(l, Judge::Human, 1),
                    human_extreme_pct: pct(l, Judge::Human, 2),
                    llm_moderate_pct: pct(l, Judge::Llm, 1),
                    llm_extreme_pct: pct(l, Judge::Llm, 2),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Table3Row {
    pub prompt: String,
    pub average_similarity: Option<f64>,
    pub cosine_similarity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Table3 {
    pub rows: Vec<Table3Row>,
}

impl Table3 {
    pub fn from_rows(rows: &[SimilarityRow]) -> Self {
        Self {
            rows: rows
                .iter()
                .map(|r| Table3Row {
                    prompt: prompt_label(r.prompt_level),
                    average_similarity: r.mean_human_similarity,
                    cosine_similarity: r.mean_cosine,
                })
                .collect(),
        }
    }
}
