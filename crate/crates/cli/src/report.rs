//! Markdown summary of a run directory.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::Result;
use bias_audit::evaluation::tables::{Table1, Table2, Table3};
use bias_audit::jsonl;
use serde::de::DeserializeOwned;
use serde_json::{json, Value};

use crate::commands::EXIT_OK;
use crate::manifest::{Manifest, StageRecorder};

fn read_opt<T: DeserializeOwned>(path: &Path) -> Option<T> {
    let text = std::fs::read_to_string(path).ok()?;
    match serde_json::from_str(&text) {
        Ok(v) => Some(v),
        Err(e) => {
            log::warn!("ignoring {}: {e}", path.display());
            None
        }
    }
}

fn cell(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.digits$}"))
}

pub fn render(run_dir: &Path) -> Result<String> {
    let manifest = Manifest::load(run_dir)?;
    let mut s = String::from("# Run report\n\n");
    let _ = writeln!(s, "Tool version {}, mock rule {}.\n", manifest.version, manifest.mock_rule);

    s.push_str("## Stages\n\n| stage | outputs |\n|---|---|\n");
    for (key, stage) in &manifest.stages {
        let _ = writeln!(s, "| {key} | {} |", stage.outputs.len());
    }

    let mut summaries: Vec<_> = std::fs::read_dir(run_dir.join("assessments"))
        .map(|rd| rd.filter_map(|e| e.ok().map(|e| e.path())).collect())
        .unwrap_or_default();
    summaries.retain(|p| p.to_string_lossy().ends_with(".summary.json"));
    summaries.sort();
    if !summaries.is_empty() {
        s.push_str("\n## Detection runs\n\n| model | paragraphs | failed | failure rate |\n|---|---|---|---|\n");
        for p in summaries {
            if let Some(v) = read_opt::<Value>(&p) {
                let _ = writeln!(
                    s,
                    "| {} | {} | {} | {} |",
                    v["model_id"].as_str().unwrap_or("?"),
                    v["n_paragraphs"],
                    v["n_failed"],
                    cell(v["failure_rate"].as_f64().map(|r| 100.0 * r), 2) + "%"
                );
            }
        }
    }

    let eval = run_dir.join("evaluation");
    if let Some(t) = read_opt::<Table1>(&eval.join("table1.json")) {
        s.push_str("\n## Detection agreement\n\n| model | exact match % | alpha | kappa | F2 |\n|---|---|---|---|---|\n");
        for r in t.rows {
            let _ = writeln!(
                s,
                "| {} | {:.3} | {:.3} | {} | {:.3} |",
                r.model,
                r.exact_match_pct,
                r.krippendorff_alpha,
                cell(r.cohen_kappa, 3),
                r.f2_score
            );
        }
    }
    if let Some(t) = read_opt::<Table2>(&eval.join("table2.json")) {
        s.push_str(
            "\n## Rewrites judged unbiased (%)\n\n| prompt | human moderate | human extreme | LLM moderate | LLM extreme |\n|---|---|---|---|---|\n",
        );
        for r in t.rows {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {} |",
                r.prompt,
                cell(r.human_moderate_pct, 1),
                cell(r.human_extreme_pct, 1),
                cell(r.llm_moderate_pct, 1),
                cell(r.llm_extreme_pct, 1)
            );
        }
    }
    if let Some(t) = read_opt::<Table3>(&eval.join("table3.json")) {
        s.push_str("\n## Rewrite similarity\n\n| prompt | annotator mean | cosine |\n|---|---|---|\n");
        for r in t.rows {
            let _ = writeln!(
                s,
                "| {} | {} | {} |",
                r.prompt,
                cell(r.average_similarity, 3),
                cell(r.cosine_similarity, 3)
            );
        }
    }
    Ok(s)
}

pub fn report(run_dir: &Path) -> Result<u8> {
    let text = render(run_dir)?;
    let path = run_dir.join("report.md");
    jsonl::write_atomic(&path, text.as_bytes())?;
    let mut stage = StageRecorder::new(run_dir, "report", "report", json!({}));
    stage.output(&path)?;
    stage.finish()?;
    print!("{text}");
    Ok(EXIT_OK)
}
