//! Shape checks of emitted tables against transcribed published values.
//!
//! The golden files hold the published numbers in this crate's table
//! layout. They are not reproduced by the pipeline; the checks only require
//! that each golden row deserialises into the table types and that emitted
//! rows carry the same fields with compatible JSON types.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use bias_audit::evaluation::tables::{Table1, Table2, Table3};
use serde::de::DeserializeOwned;
use serde_json::Value;

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/golden")
}

/// Emitted JSON to compare: the three tables plus one publisher/year and
/// one state/year cell.
pub struct Emitted {
    pub table1: Value,
    pub table2: Value,
    pub table3: Value,
    pub publisher_year_cell: Value,
    pub state_year_cell: Value,
}

fn read(dir: &Path, name: &str) -> Result<Value, String> {
    let text = std::fs::read_to_string(dir.join(name)).map_err(|e| format!("{name}: {e}"))?;
    serde_json::from_str(&text).map_err(|e| format!("{name}: {e}"))
}

fn strict<T: DeserializeOwned>(v: &Value, name: &str) -> Result<T, String> {
    serde_json::from_value(v.clone()).map_err(|e| format!("{name} does not fit the table type: {e}"))
}

fn keys(v: &Value) -> Result<BTreeSet<String>, String> {
    v.as_object()
        .map(|o| o.keys().cloned().collect())
        .ok_or_else(|| format!("not an object: {v}"))
}

fn rows(v: &Value) -> Result<&Vec<Value>, String> {
    v.get("rows").and_then(Value::as_array).ok_or_else(|| "missing rows array".to_string())
}

fn compatible(golden: &Value, emitted: &Value) -> bool {
    match (golden, emitted) {
        (_, Value::Null) | (Value::Null, _) => true,
        (Value::Number(g), Value::Number(e)) => g.is_f64() == e.is_f64(),
        (Value::String(_), Value::String(_)) => true,
        _ => false,
    }
}

fn same_row_shape(table: &str, golden: &Value, emitted: &Value) -> Result<(), String> {
    if keys(golden)? != keys(emitted)? {
        return Err(format!("{table} top-level keys differ"));
    }
    let g_rows = rows(golden)?;
    let e_rows = rows(emitted)?;
    if e_rows.is_empty() {
        return Err(format!("{table}: emitted table has no rows"));
    }
    let want = keys(&g_rows[0])?;
    for r in g_rows.iter().chain(e_rows) {
        let got = keys(r)?;
        if got != want {
            return Err(format!("{table}: row fields {got:?} differ from {want:?}"));
        }
        for k in &want {
            if !compatible(&g_rows[0][k], &r[k]) {
                return Err(format!("{table}: field {k} has type {} vs {}", g_rows[0][k], r[k]));
            }
        }
    }
    Ok(())
}

fn same_labels(table: &str, golden: &Value, emitted: &Value) -> Result<(), String> {
    let labels = |v: &Value| -> Result<Vec<String>, String> {
        Ok(rows(v)?.iter().map(|r| r["prompt"].as_str().unwrap_or_default().to_string()).collect())
    };
    let (g, e) = (labels(golden)?, labels(emitted)?);
    if g == e {
        Ok(())
    } else {
        Err(format!("{table}: row labels {e:?} differ from {g:?}"))
    }
}

fn cells_fit(name: &str, golden: &Value, emitted_cell: &Value) -> Result<(), String> {
    let emitted_keys = keys(emitted_cell)?;
    let cells = golden.as_array().ok_or_else(|| format!("{name}: not an array"))?;
    if cells.is_empty() {
        return Err(format!("{name}: no cells"));
    }
    for c in cells {
        for (k, v) in c.as_object().ok_or_else(|| format!("{name}: cell is not an object"))? {
            if !emitted_keys.contains(k) {
                return Err(format!("{name}: emitted cells have no field {k}"));
            }
            if !compatible(v, &emitted_cell[k]) {
                return Err(format!("{name}: field {k} has type {v} vs {}", emitted_cell[k]));
            }
        }
    }
    Ok(())
}

/// One `(check, outcome)` per golden file.
pub fn check_all(dir: &Path, emitted: &Emitted) -> Vec<(String, Result<(), String>)> {
    let t1 = (|| {
        let g = read(dir, "table1.json")?;
        let parsed: Table1 = strict(&g, "table1.json")?;
        if parsed.rows.len() != 6 {
            return Err(format!("table1.json has {} rows", parsed.rows.len()));
        }
        same_row_shape("table1", &g, &emitted.table1)
    })();
    let t2 = (|| {
        let g = read(dir, "table2.json")?;
        strict::<Table2>(&g, "table2.json")?;
        same_row_shape("table2", &g, &emitted.table2)?;
        same_labels("table2", &g, &emitted.table2)
    })();
    let t3 = (|| {
        let g = read(dir, "table3.json")?;
        strict::<Table3>(&g, "table3.json")?;
        same_row_shape("table3", &g, &emitted.table3)?;
        same_labels("table3", &g, &emitted.table3)
    })();
    let py = read(dir, "publisher_year_cells.json")
        .and_then(|g| cells_fit("publisher_year_cells", &g, &emitted.publisher_year_cell));
    let sy = read(dir, "state_year_cells.json")
        .and_then(|g| cells_fit("state_year_cells", &g, &emitted.state_year_cell));
    vec![
        ("table1".into(), t1),
        ("table2".into(), t2),
        ("table3".into(), t3),
        ("publisher_year_cells".into(), py),
        ("state_year_cells".into(), sy),
    ]
}
