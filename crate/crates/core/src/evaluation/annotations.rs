//! Human annotation files: `paragraph_id,annotator_id,task,variant,value`.

use std::collections::{BTreeMap, HashSet};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::ParagraphId;
use crate::debias::PromptLevel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    BiasScore,
    Similarity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Original,
    DebiasedLevel1,
    DebiasedLevel2,
    DebiasedLevel3,
}

impl Variant {
    pub fn debiased(level: PromptLevel) -> Self {
        match level {
            PromptLevel::One => Variant::DebiasedLevel1,
            PromptLevel::Two => Variant::DebiasedLevel2,
            PromptLevel::Three => Variant::DebiasedLevel3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub paragraph_id: ParagraphId,
    pub annotator_id: String,
    pub task: Task,
    pub variant: Variant,
    pub value: i8,
}

impl AnnotationRecord {
    fn value_in_range(&self) -> bool {
        match self.task {
            Task::BiasScore => (0..=2).contains(&self.value),
            Task::Similarity => (-2..=2).contains(&self.value),
        }
    }
}

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("header must be `paragraph_id,annotator_id,task,variant,value`, found `{0}`")]
    Header(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub const HEADER: [&str; 5] = ["paragraph_id", "annotator_id", "task", "variant", "value"];

/// Strictly parses an annotation table. Rows are numbered from 1 for the
/// first data row (the header is row 0).
pub fn read_annotations<R: Read>(reader: R) -> Result<Vec<AnnotationRecord>, AnnotationError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != HEADER {
        return Err(AnnotationError::Header(header.join(",")));
    }
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, row) in rdr.deserialize::<AnnotationRecord>().enumerate() {
        let row_no = i + 1;
        let record = row.map_err(|e| AnnotationError::Row {
            row: row_no,
            message: e.to_string(),
        })?;
        if !record.value_in_range() {
            return Err(AnnotationError::Row {
                row: row_no,
                message: format!("value {} out of range for task {:?}", record.value, record.task),
            });
        }
        let key = (
            record.paragraph_id.clone(),
            record.annotator_id.clone(),
            record.task,
            record.variant,
        );
        if !seen.insert(key) {
            return Err(AnnotationError::Row {
                row: row_no,
                message: format!(
                    "duplicate judgment by {} on {} ({:?}, {:?})",
                    record.annotator_id, record.paragraph_id, record.task, record.variant
                ),
            });
        }
        out.push(record);
    }
    Ok(out)
}

pub fn load_annotations(path: &Path) -> Result<Vec<AnnotationRecord>, AnnotationError> {
    read_annotations(std::fs::File::open(path)?)
}

pub fn write_annotations<W: std::io::Write>(
    writer: W,
    records: &[AnnotationRecord],
) -> Result<(), AnnotationError> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Values grouped per (paragraph, variant) for one task, annotator order
/// preserved by annotator id.
pub fn group(
    records: &[AnnotationRecord],
    task: Task,
) -> BTreeMap<(ParagraphId, Variant), Vec<i8>> {
    let mut sorted: Vec<&AnnotationRecord> = records.iter().filter(|r| r.task == task).collect();
    sorted.sort_by(|a, b| a.annotator_id.cmp(&b.annotator_id));
    let mut out: BTreeMap<(ParagraphId, Variant), Vec<i8>> = BTreeMap::new();
    for r in sorted {
        out.entry((r.paragraph_id.clone(), r.variant))
            .or_default()
            .push(r.value);
    }
    out
}
