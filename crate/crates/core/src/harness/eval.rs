use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::dataset::DatasetRecord;
use super::pipeline::Prediction;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelStats {
    pub total: usize,
    pub correct: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordFailure {
    pub record_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// Keyed by gold label.
    pub per_label: BTreeMap<String, LabelStats>,
    pub failures: Vec<RecordFailure>,
}

/// Accuracy of `predictions` against the gold labels of `records`.
/// Failed, missing and label-less predictions count as incorrect.
pub fn evaluate(records: &[&DatasetRecord], predictions: &[Prediction]) -> Result<EvalReport> {
    if records.is_empty() {
        return Err(Error::Precondition("nothing to evaluate".into()));
    }
    let mut by_id: HashMap<&str, &Prediction> = HashMap::new();
    for p in predictions {
        if by_id.insert(p.record_id.as_str(), p).is_some() {
            return Err(Error::Dataset(format!("duplicate prediction for {:?}", p.record_id)));
        }
    }
    let mut per_label: BTreeMap<String, LabelStats> = BTreeMap::new();
    let mut failures = Vec::new();
    let mut correct = 0;
    for r in records {
        let stats = per_label.entry(r.gold_label.clone()).or_default();
        stats.total += 1;
        let hit = match by_id.get(r.record_id.as_str()) {
            None => {
                failures.push(RecordFailure { record_id: r.record_id.clone(), reason: "no prediction".into() });
                false
            }
            Some(p) => {
                if let Some(f) = &p.failure {
                    failures.push(RecordFailure { record_id: r.record_id.clone(), reason: f.clone() });
                }
                p.label.as_deref() == Some(r.gold_label.as_str())
            }
        };
        if hit {
            stats.correct += 1;
            correct += 1;
        }
    }
    Ok(EvalReport {
        total: records.len(),
        correct,
        accuracy: correct as f64 / records.len() as f64,
        per_label,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::Split;
    use crate::perception::BBox;
    use std::path::PathBuf;

    fn rec(id: &str, label: &str) -> DatasetRecord {
        let b = BBox::new(0.0, 0.0, 1.0, 1.0).unwrap();
        DatasetRecord {
            record_id: id.into(),
            image_ref: PathBuf::from("x.png"),
            b1: b,
            b2: b,
            gold_label: label.into(),
            split: Split::Test,
        }
    }

    fn pred(id: &str, label: Option<&str>) -> Prediction {
        Prediction {
            record_id: id.into(),
            label: label.map(str::to_string),
            explanation: String::new(),
            failure: label.is_none().then(|| "reason: transport error".to_string()),
        }
    }

    #[test]
    fn two_of_three() {
        let records = [rec("1", "friends"), rec("2", "friends"), rec("3", "colleagues")];
        let refs: Vec<&DatasetRecord> = records.iter().collect();
        let preds = [pred("1", Some("friends")), pred("2", Some("colleagues")), pred("3", Some("colleagues"))];
        let r = evaluate(&refs, &preds).unwrap();
        assert_eq!((r.total, r.correct), (3, 2));
        assert!((r.accuracy - 0.6667).abs() < 1e-4);
        assert_eq!(r.per_label["friends"], LabelStats { total: 2, correct: 1 });
        assert_eq!(r.per_label.values().map(|s| s.total).sum::<usize>(), r.total);
    }

    #[test]
    fn all_failures() {
        let records = [rec("1", "friends"), rec("2", "siblings")];
        let refs: Vec<&DatasetRecord> = records.iter().collect();
        let r = evaluate(&refs, &[pred("1", None)]).unwrap();
        assert_eq!(r.accuracy, 0.0);
        assert_eq!(r.failures.len(), r.total);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(evaluate(&[], &[]).is_err());
    }
}
