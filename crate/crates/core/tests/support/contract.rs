//! Checks raw detector replies against their expected normalisations.
//!
//! Each `<case>.txt` in the fixture directory is a raw reply to the prompt
//! for `paragraph.txt`; `<case>.expected.json` holds either
//! `{"ok": <assessment fields>}` or `{"error": "<kind>"}`.

use std::path::{Path, PathBuf};

use bias_audit::detection::{assessment_from_raw, AssessmentCause, ParseError};
use bias_audit::llm_gateway::ExtractError;
use bias_audit::Paragraph;
use serde_json::Value;

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/responses")
}

fn error_kind(e: &AssessmentCause) -> &'static str {
    match e {
        AssessmentCause::Extract(ExtractError::NoJsonFound) => "no_json_found",
        AssessmentCause::Extract(ExtractError::MalformedJson { .. }) => "malformed_json",
        AssessmentCause::Parse(ParseError::SchemaError(_)) => "schema_error",
        AssessmentCause::Parse(ParseError::ScoreUnparseable(_)) => "score_unparseable",
        AssessmentCause::Gateway(_) => "gateway",
    }
}

fn check_case(paragraph: &Paragraph, raw: &str, expected: &Value) -> Result<(), String> {
    let got = match assessment_from_raw(raw, paragraph, "fixture-model") {
        Ok(a) => {
            let mut v = serde_json::to_value(&a).map_err(|e| e.to_string())?;
            let obj = v.as_object_mut().ok_or("assessment is not an object")?;
            for k in ["paragraph_id", "model_id", "raw_response_digest"] {
                obj.remove(k);
            }
            serde_json::json!({ "ok": v })
        }
        Err(e) => serde_json::json!({ "error": error_kind(&e) }),
    };
    if &got == expected {
        Ok(())
    } else {
        Err(format!("expected {expected}, got {got}"))
    }
}

/// One `(case, outcome)` per fixture, sorted by case name.
pub fn run_all(dir: &Path) -> Vec<(String, Result<(), String>)> {
    let text = std::fs::read_to_string(dir.join("paragraph.txt")).expect("paragraph.txt");
    let paragraph = Paragraph::new("fixture", 0, text);
    let mut cases: Vec<PathBuf> = std::fs::read_dir(dir)
        .expect("fixture dir")
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "txt") && !p.ends_with("paragraph.txt"))
        .collect();
    cases.sort();
    cases
        .into_iter()
        .map(|raw_path| {
            let name = raw_path.file_stem().unwrap().to_string_lossy().into_owned();
            let outcome = (|| {
                let raw = std::fs::read_to_string(&raw_path).map_err(|e| e.to_string())?;
                let exp_path = dir.join(format!("{name}.expected.json"));
                let exp_text = std::fs::read_to_string(&exp_path).map_err(|e| format!("{}: {e}", exp_path.display()))?;
                let expected: Value = serde_json::from_str(&exp_text).map_err(|e| e.to_string())?;
                check_case(&paragraph, &raw, &expected)
            })();
            (name, outcome)
        })
        .collect()
}
