//! Welch's unequal-variance two-sample t-test.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("need at least two observations per sample (got {n_a} and {n_b})")]
pub struct InsufficientData {
    pub n_a: usize,
    pub n_b: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub n_a: usize,
    pub n_b: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    /// `None` when both samples have zero variance.
    pub t: Option<f64>,
    pub df: Option<f64>,
    /// Two-sided. With zero variance in both samples this is a sentinel:
    /// 0 if the means differ, 1 if they are equal.
    pub p_value: f64,
    pub zero_variance: bool,
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, v)
}

pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchResult, InsufficientData> {
    if a.len() < 2 || b.len() < 2 {
        return Err(InsufficientData { n_a: a.len(), n_b: b.len() });
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (sa, sb) = (va / na, vb / nb);
    let se2 = sa + sb;
    let base = WelchResult {
        n_a: a.len(),
        n_b: b.len(),
        mean_a: ma,
        mean_b: mb,
        t: None,
        df: None,
        p_value: if ma == mb { 1.0 } else { 0.0 },
        zero_variance: true,
    };
    if se2 == 0.0 {
        return Ok(base);
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).expect("df is positive");
    Ok(WelchResult {
        t: Some(t),
        df: Some(df),
        p_value: (2.0 * dist.sf(t.abs())).min(1.0),
        zero_variance: false,
        ..base
    })
}
