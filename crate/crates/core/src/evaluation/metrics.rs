//! Agreement and classification metrics over small ordinal labels.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricError {
    #[error("no votes")]
    EmptyVotes,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("not enough data: {0}")]
    InsufficientData(&'static str),
    #[error("expected agreement is 1; kappa undefined")]
    DegenerateMarginals,
    #[error("zero vector")]
    ZeroVector,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieRule {
    #[default]
    HigherSeverity,
    LowerSeverity,
}

/// Modal label; `true` in the second slot when a tie had to be broken.
pub fn majority_vote(votes: &[u8], rule: TieRule) -> Result<(u8, bool), MetricError> {
    let mut hist: BTreeMap<u8, usize> = BTreeMap::new();
    for &v in votes {
        *hist.entry(v).or_default() += 1;
    }
    let top = *hist.values().max().ok_or(MetricError::EmptyVotes)?;
    let modes: Vec<u8> = hist.iter().filter(|(_, &c)| c == top).map(|(&v, _)| v).collect();
    let pick = match rule {
        TieRule::HigherSeverity => modes[modes.len() - 1],
        TieRule::LowerSeverity => modes[0],
    };
    Ok((pick, modes.len() > 1))
}

fn check_lengths(a: usize, b: usize) -> Result<(), MetricError> {
    if a != b {
        Err(MetricError::LengthMismatch(a, b))
    } else {
        Ok(())
    }
}

pub fn exact_match_rate(pred: &[u8], truth: &[u8]) -> Result<f64, MetricError> {
    check_lengths(pred.len(), truth.len())?;
    if pred.is_empty() {
        return Err(MetricError::InsufficientData("no items"));
    }
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / pred.len() as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KappaWeighting {
    #[default]
    None,
    Linear,
    Quadratic,
}

impl KappaWeighting {
    fn disagreement(self, a: u8, b: u8) -> f64 {
        let d = (f64::from(a) - f64::from(b)).abs();
        match self {
            KappaWeighting::None => f64::from(u8::from(a != b)),
            KappaWeighting::Linear => d,
            KappaWeighting::Quadratic => d * d,
        }
    }
}

/// Cohen's kappa, `1 - Σ w·O / Σ w·E` with disagreement weights `w`.
///
/// With unit weights this equals `(p_o - p_e) / (1 - p_e)`. Weight scale
/// cancels, so the linear and quadratic variants need no category count.
pub fn cohen_kappa(pred: &[u8], truth: &[u8], weighting: KappaWeighting) -> Result<f64, MetricError> {
    check_lengths(pred.len(), truth.len())?;
    if pred.len() < 2 {
        return Err(MetricError::InsufficientData("kappa needs at least two items"));
    }
    let n = pred.len() as f64;
    let mut pred_marg: BTreeMap<u8, f64> = BTreeMap::new();
    let mut truth_marg: BTreeMap<u8, f64> = BTreeMap::new();
    let mut observed = 0.0;
    for (&p, &t) in pred.iter().zip(truth) {
        *pred_marg.entry(p).or_default() += 1.0;
        *truth_marg.entry(t).or_default() += 1.0;
        observed += weighting.disagreement(p, t);
    }
    let mut expected = 0.0;
    for (&p, &np) in &pred_marg {
        for (&t, &nt) in &truth_marg {
            expected += weighting.disagreement(p, t) * np * nt;
        }
    }
    let observed = observed / n;
    let expected = expected / (n * n);
    if expected == 0.0 {
        return Err(MetricError::DegenerateMarginals);
    }
    Ok(1.0 - observed / expected)
}

/// F-beta on labels binarised as `label > 0`; 0 when precision and recall
/// are both 0.
pub fn fbeta(pred: &[u8], truth: &[u8], beta: f64) -> Result<f64, MetricError> {
    check_lengths(pred.len(), truth.len())?;
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&p, &t) in pred.iter().zip(truth) {
        match (p > 0, t > 0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    Ok(fbeta_from(precision, recall, beta))
}

pub fn fbeta_from(precision: f64, recall: f64, beta: f64) -> f64 {
    if precision == 0.0 && recall == 0.0 {
        return 0.0;
    }
    let b2 = beta * beta;
    (1.0 + b2) * precision * recall / (b2 * precision + recall)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaLevel {
    #[default]
    Nominal,
    Ordinal,
    Interval,
}

/// Krippendorff's alpha over `units[item][rater]`, `None` for missing.
///
/// Built from the coincidence matrix: a unit with `m` pairable values adds
/// `1/(m-1)` for every ordered pair of values from different raters. Units
/// with fewer than two values are not pairable and are ignored. When the
/// observed disagreement is zero the result is 1.
pub fn krippendorff_alpha(units: &[Vec<Option<u8>>], level: AlphaLevel) -> Result<f64, MetricError> {
    let mut coincidence: BTreeMap<(u8, u8), f64> = BTreeMap::new();
    let mut pairable_units = 0;
    for unit in units {
        let values: Vec<u8> = unit.iter().flatten().copied().collect();
        let m = values.len();
        if m < 2 {
            continue;
        }
        pairable_units += 1;
        let w = 1.0 / (m - 1) as f64;
        for (i, &a) in values.iter().enumerate() {
            for (j, &b) in values.iter().enumerate() {
                if i != j {
                    *coincidence.entry((a, b)).or_default() += w;
                }
            }
        }
    }
    if pairable_units == 0 {
        return Err(MetricError::InsufficientData("no unit has two or more ratings"));
    }

    let mut marginals: BTreeMap<u8, f64> = BTreeMap::new();
    for (&(c, _), &o) in &coincidence {
        *marginals.entry(c).or_default() += o;
    }
    let n: f64 = marginals.values().sum();
    if n < 2.0 {
        return Err(MetricError::InsufficientData("fewer than two pairable values"));
    }

    let delta = |c: u8, k: u8| -> f64 {
        match level {
            AlphaLevel::Nominal => f64::from(u8::from(c != k)),
            AlphaLevel::Interval => {
                let d = f64::from(c) - f64::from(k);
                d * d
            }
            AlphaLevel::Ordinal => {
                let (lo, hi) = if c <= k { (c, k) } else { (k, c) };
                let between: f64 = marginals.range(lo..=hi).map(|(_, &v)| v).sum();
                let d = between - (marginals[&c] + marginals[&k]) / 2.0;
                d * d
            }
        }
    };

    let observed: f64 = coincidence.iter().map(|(&(c, k), &o)| o * delta(c, k)).sum();
    if observed == 0.0 {
        return Ok(1.0);
    }
    let mut expected = 0.0;
    for (&c, &nc) in &marginals {
        for (&k, &nk) in &marginals {
            expected += nc * nk * delta(c, k);
        }
    }
    Ok(1.0 - (n - 1.0) * observed / expected)
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::DimensionMismatch(a.len(), b.len()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(MetricError::ZeroVector);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Percentile bootstrap interval of `statistic` over resampled items.
pub fn bootstrap_interval<T: Clone>(
    items: &[T],
    statistic: impl Fn(&[T]) -> Option<f64>,
    resamples: usize,
    confidence: f64,
    seed: u64,
) -> Option<(f64, f64)> {
    use rand::{Rng, SeedableRng};
    if items.is_empty() || resamples == 0 {
        return None;
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut stats: Vec<f64> = (0..resamples)
        .filter_map(|_| {
            let sample: Vec<T> = (0..items.len())
                .map(|_| items[rng.gen_range(0..items.len())].clone())
                .collect();
            statistic(&sample)
        })
        .collect();
    if stats.is_empty() {
        return None;
    }
    stats.sort_by(f64::total_cmp);
    let tail = (1.0 - confidence) / 2.0;
    let at = |q: f64| stats[((q * (stats.len() - 1) as f64).round() as usize).min(stats.len() - 1)];
    Some((at(tail), at(1.0 - tail)))
}
