//! Detect run against a mock provider that fails a fixed subset of
//! paragraphs permanently.

use std::collections::BTreeSet;
use std::path::Path;

use bias_audit::corpus::load_corpus;
use bias_audit::llm_gateway::FaultInjection;
use serde_json::Value;

use super::pipeline::{fixture, run};

pub const FAIL_FRACTION: f64 = 0.1;
pub const SEED: u64 = 3;

pub struct FaultRun {
    pub exit_code: Option<i32>,
    pub n_records: usize,
    pub expected: BTreeSet<String>,
    pub failed_records: BTreeSet<String>,
    pub summary_failed: BTreeSet<String>,
}

pub fn fault_run(dir: &Path, threshold: Option<f64>) -> Result<FaultRun, String> {
    let corpus = fixture("synthetic");
    let fault = FaultInjection {
        fail_fraction: FAIL_FRACTION,
        seed: SEED,
    };
    let provider = dir.join("faulty.toml");
    let toml = format!(
        "provider_kind = \"mock\"\nmodel_id = \"faulty-detector\"\nrequests_per_minute = 1000000\n\n[fault_injection]\nfail_fraction = {FAIL_FRACTION}\nseed = {SEED}\n"
    );
    std::fs::write(&provider, toml).map_err(|e| e.to_string())?;

    let loaded = load_corpus(&corpus, &Default::default()).map_err(|e| e.to_string())?;
    let expected: BTreeSet<String> = loaded
        .paragraphs()
        .into_iter()
        .filter(|p| fault.should_fail(&p.text))
        .map(|p| p.paragraph_id.to_string())
        .collect();

    let run_dir = dir.join("run");
    let mut args = vec![
        "--log-level".to_string(),
        "error".into(),
        "detect".into(),
        "--corpus".into(),
        corpus.to_string_lossy().into_owned(),
        "--provider".into(),
        provider.to_string_lossy().into_owned(),
        "--out".into(),
        run_dir.to_string_lossy().into_owned(),
    ];
    if let Some(t) = threshold {
        args.push("--failure-threshold".into());
        args.push(t.to_string());
    }
    let out = run(args);

    let text = std::fs::read_to_string(run_dir.join("assessments/faulty-detector.jsonl")).map_err(|e| e.to_string())?;
    let records: Vec<Value> = text
        .lines()
        .map(serde_json::from_str)
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let failed_records = records
        .iter()
        .filter(|r| r["outcome"]["status"] == "failed")
        .map(|r| r["paragraph_id"].as_str().unwrap_or_default().to_string())
        .collect();
    let summary: Value = serde_json::from_str(
        &std::fs::read_to_string(run_dir.join("assessments/faulty-detector.summary.json")).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    let summary_failed = summary["failed_ids"]
        .as_array()
        .ok_or("summary has no failed_ids")?
        .iter()
        .filter_map(|v| v.as_str().map(str::to_string))
        .collect();
    Ok(FaultRun {
        exit_code: out.status.code(),
        n_records: records.len(),
        expected,
        failed_records,
        summary_failed,
    })
}
