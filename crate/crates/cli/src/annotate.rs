//! Synthetic annotations from the mock scoring rule.
//!
//! Each judgment follows the rule (`mock_score` for bias, binned mock
//! embedding cosine for similarity) except that, with probability `noise`,
//! the annotator picks a uniformly random value instead. Randomness is
//! derived per judgment from the seed, so output is independent of order.

use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use bias_audit::corpus::load_corpus;
use bias_audit::debias::{DebiasOutcome, DebiasResult};
use bias_audit::evaluation::annotations::{write_annotations, AnnotationRecord, Task, Variant};
use bias_audit::evaluation::metrics::cosine_similarity;
use bias_audit::llm_gateway::mock::{mock_embedding, mock_score};
use bias_audit::{jsonl, ParagraphId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::commands::EXIT_OK;
use crate::manifest::StageRecorder;

/// Similarity rating for a cosine value, on the -2..=2 scale.
pub fn similarity_bin(cos: f64) -> i8 {
    match cos {
        c if c >= 0.98 => 2,
        c if c >= 0.90 => 1,
        c if c >= 0.75 => 0,
        c if c >= 0.50 => -1,
        _ => -2,
    }
}

struct Annotator {
    seed: u64,
    noise: f64,
}

impl Annotator {
    fn judge(&self, key: &str, rule_value: i8, range: (i8, i8)) -> i8 {
        let digest = bias_audit::sha256_hex(format!("{}\u{1f}{key}", self.seed).as_bytes());
        let mut seed = [0u8; 32];
        for (i, b) in seed.iter_mut().enumerate() {
            *b = u8::from_str_radix(&digest[2 * i..2 * i + 2], 16).expect("hex digest");
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        if rng.gen::<f64>() < self.noise {
            rng.gen_range(range.0..=range.1)
        } else {
            rule_value
        }
    }
}

fn record(id: &ParagraphId, annotator: &str, task: Task, variant: Variant, value: i8) -> AnnotationRecord {
    AnnotationRecord {
        paragraph_id: id.clone(),
        annotator_id: annotator.to_string(),
        task,
        variant,
        value,
    }
}

pub fn annotate(
    paragraphs: &[(ParagraphId, String)],
    rewrites: &[DebiasResult],
    annotators: usize,
    noise: f64,
    seed: u64,
) -> Vec<AnnotationRecord> {
    let ann = Annotator { seed, noise };
    let names: Vec<String> = (1..=annotators).map(|i| format!("ann{i:02}")).collect();
    let mut out = Vec::new();
    for (id, text) in paragraphs {
        let rule = mock_score(text) as i8;
        for name in &names {
            let key = format!("{id}|{name}|bias_score|original");
            out.push(record(id, name, Task::BiasScore, Variant::Original, ann.judge(&key, rule, (0, 2))));
        }
    }
    for r in rewrites {
        let variant = Variant::debiased(r.prompt_level);
        let level = r.prompt_level.as_u8();
        let bias_rule = mock_score(&r.rewritten_text) as i8;
        let cos = cosine_similarity(&mock_embedding(&r.original_text), &mock_embedding(&r.rewritten_text))
            .unwrap_or(0.0);
        let sim_rule = similarity_bin(cos);
        for name in &names {
            let id = &r.paragraph_id;
            let key = format!("{id}|{name}|bias_score|{level}");
            out.push(record(id, name, Task::BiasScore, variant, ann.judge(&key, bias_rule, (0, 2))));
            let key = format!("{id}|{name}|similarity|{level}");
            out.push(record(id, name, Task::Similarity, variant, ann.judge(&key, sim_rule, (-2, 2))));
        }
    }
    out.sort_by(|a, b| {
        (&a.paragraph_id, a.variant, a.task, &a.annotator_id).cmp(&(&b.paragraph_id, b.variant, b.task, &b.annotator_id))
    });
    out
}

pub fn mock_annotate(
    corpus: &Path,
    debiased: &[PathBuf],
    out: &Path,
    annotators: usize,
    noise: f64,
    seed: u64,
) -> Result<u8> {
    if annotators == 0 {
        bail!("--annotators must be at least 1");
    }
    if !(0.0..=1.0).contains(&noise) {
        bail!("--noise must be within [0, 1]");
    }
    let loaded = load_corpus(corpus, &Default::default())?;
    let paragraphs: Vec<(ParagraphId, String)> = loaded
        .paragraphs()
        .into_iter()
        .map(|p| (p.paragraph_id, p.text))
        .collect();
    let mut rewrites = Vec::new();
    for f in debiased {
        let outcomes: Vec<DebiasOutcome> = jsonl::read(f)?;
        rewrites.extend(outcomes.into_iter().filter_map(|o| match o {
            DebiasOutcome::Ok(r) => Some(r),
            DebiasOutcome::Failed(_) => None,
        }));
    }
    let records = annotate(&paragraphs, &rewrites, annotators, noise, seed);
    let mut buf = Vec::new();
    write_annotations(&mut buf, &records)?;
    jsonl::write_atomic(out, &buf)?;

    let run_dir = match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut stage = StageRecorder::new(
        &run_dir,
        "mock-annotate",
        "mock-annotate",
        json!({"annotators": annotators, "noise": noise, "seed": seed}),
    );
    stage.input_dir("corpus", corpus)?;
    for (i, f) in debiased.iter().enumerate() {
        stage.input_file(&format!("debiased_{i}"), f)?;
    }
    stage.output(out)?;
    stage.finish()?;
    log::info!("wrote {} judgments to {}", records.len(), out.display());
    println!("{}", out.display());
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_free_follows_rule() {
        let paras = vec![
            (ParagraphId::new("a", 0), "The thugs ran.".to_string()),
            (ParagraphId::new("a", 1), "Police arrived.".to_string()),
        ];
        let recs = annotate(&paras, &[], 3, 0.0, 1);
        assert_eq!(recs.len(), 6);
        assert!(recs[..3].iter().all(|r| r.value == 2));
        assert!(recs[3..].iter().all(|r| r.value == 0));
    }

    #[test]
    fn deterministic_and_in_range() {
        let paras: Vec<_> = (0..30)
            .map(|i| (ParagraphId::new("a", i), format!("Paragraph {i} about hordes.")))
            .collect();
        let a = annotate(&paras, &[], 5, 0.5, 9);
        assert_eq!(a, annotate(&paras, &[], 5, 0.5, 9));
        assert!(a.iter().all(|r| (0..=2).contains(&r.value)));
        assert!(a.iter().any(|r| r.value != 1));
    }

    #[test]
    fn bins() {
        assert_eq!(similarity_bin(1.0), 2);
        assert_eq!(similarity_bin(0.9), 1);
        assert_eq!(similarity_bin(0.0), -2);
    }
}
