use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perception::{center_to_corner, BBox};
use crate::prompt::LabelSet;

/// Largest tolerated share of malformed lines.
pub const MAX_BAD_LINE_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// One line of a dataset file. Boxes are `[cx, cy, h, w]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub image: String,
    pub b1: [f64; 4],
    pub b2: [f64; 4],
    pub label: String,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub record_id: String,
    /// Image path resolved against the dataset file's directory.
    pub image_ref: PathBuf,
    pub b1: BBox,
    pub b2: BBox,
    pub gold_label: String,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineError {
    /// 1-based line number.
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub records: Vec<DatasetRecord>,
    pub errors: Vec<LineError>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> Vec<&DatasetRecord> {
        self.records.iter().filter(|r| r.split == split).collect()
    }
}

fn to_bbox([cx, cy, h, w]: [f64; 4]) -> Result<BBox> {
    center_to_corner(cx, cy, h, w)
}

fn parse_line(raw: &str, line: usize, base: &Path, labels: &LabelSet) -> Result<DatasetRecord> {
    let rec: RawRecord = serde_json::from_str(raw).map_err(|e| Error::Dataset(e.to_string()))?;
    let gold_label = labels
        .canonicalize(&rec.label)
        .ok_or_else(|| Error::Dataset(format!("label {:?} not in {}", rec.label, labels.name)))?
        .to_string();
    Ok(DatasetRecord {
        record_id: rec.id.unwrap_or_else(|| line.to_string()),
        image_ref: base.join(&rec.image),
        b1: to_bbox(rec.b1)?,
        b2: to_bbox(rec.b2)?,
        gold_label,
        split: rec.split,
    })
}

/// Parses a JSON-lines dataset. Bad lines are reported in `errors` unless
/// they exceed [`MAX_BAD_LINE_FRACTION`] of all non-blank lines.
pub fn load_dataset(path: &Path, labels: &LabelSet) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut records = Vec::new();
    let mut errors = Vec::new();
    let mut lines = 0usize;
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        lines += 1;
        match parse_line(raw, i + 1, base, labels) {
            Ok(r) => records.push(r),
            Err(e) => errors.push(LineError { line: i + 1, reason: e.to_string() }),
        }
    }
    if records.is_empty() {
        return Err(Error::Dataset(format!("{} has no valid records", path.display())));
    }
    if errors.len() as f64 > MAX_BAD_LINE_FRACTION * lines as f64 {
        let report: Vec<String> = errors.iter().map(|e| format!("line {}: {}", e.line, e.reason)).collect();
        return Err(Error::Dataset(format!(
            "{} of {lines} lines are malformed:\n{}",
            errors.len(),
            report.join("\n")
        )));
    }
    for (i, r) in records.iter().enumerate() {
        if records[..i].iter().any(|o| o.record_id == r.record_id) {
            return Err(Error::Dataset(format!("duplicate record id {:?}", r.record_id)));
        }
    }
    for e in &errors {
        log::warn!("{}:{}: {}", path.display(), e.line, e.reason);
    }
    Ok(Dataset { records, errors })
}
