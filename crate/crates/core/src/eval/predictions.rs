//! Tab-separated predictions files: instance_id, gold, predicted, kind.
//! A file written here re-evaluates to bit-identical metrics.

use std::fs;
use std::path::Path;

use crate::corpus::InstanceKind;
use crate::dataset::EncodedInstance;
use crate::error::{Error, Result};
use crate::eval::PredictionRecord;
use crate::fusion::Model;

/// Run the model over a set and collect one record per instance.
pub fn predict_records(model: &Model, set: &[EncodedInstance]) -> Result<Vec<PredictionRecord>> {
    set.iter()
        .map(|x| {
            let out = model.forward(x, None)?;
            let predicted = model.labels().name(out.predicted()).ok_or_else(|| {
                Error::validation(x.instance_id.clone(), "prediction outside label set")
            })?;
            Ok(PredictionRecord {
                instance_id: x.instance_id.clone(),
                gold: x.label.clone(),
                predicted: predicted.to_string(),
                kind: x.kind,
            })
        })
        .collect()
}

pub fn write_predictions(path: &Path, records: &[PredictionRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        for (name, field) in [("instance_id", &r.instance_id), ("gold", &r.gold), ("predicted", &r.predicted)] {
            if field.contains(['\t', '\n']) {
                return Err(Error::validation(
                    r.instance_id.clone(),
                    format!("{name} contains a tab or newline"),
                ));
            }
        }
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            r.instance_id, r.gold, r.predicted, r.kind
        ));
    }
    fs::write(path, out).map_err(|source| Error::io(path, source))
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>> {
    let text = fs::read_to_string(path).map_err(|source| Error::io(path, source))?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [instance_id, gold, predicted, kind] = fields.as_slice() else {
            return Err(Error::malformed(
                i + 1,
                format!(
                    "{}: expected 4 tab-separated fields, found {}",
                    path.display(),
                    fields.len()
                ),
            ));
        };
        let kind = match *kind {
            "overlapping" => InstanceKind::Overlapping,
            "normal" => InstanceKind::Normal,
            other => {
                return Err(Error::malformed(
                    i + 1,
                    format!("{}: unknown instance kind {other:?}", path.display()),
                ));
            }
        };
        records.push(PredictionRecord {
            instance_id: instance_id.to_string(),
            gold: gold.to_string(),
            predicted: predicted.to_string(),
            kind,
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{LabelSet, Task};
    use crate::eval::stratified_eval;

    fn sample() -> Vec<PredictionRecord> {
        vec![
            PredictionRecord {
                instance_id: "d1.s0.T1.T3".into(),
                gold: "CPR:4".into(),
                predicted: "CPR:4".into(),
                kind: InstanceKind::Overlapping,
            },
            PredictionRecord {
                instance_id: "d1.s1.T2.T3".into(),
                gold: "False".into(),
                predicted: "CPR:9".into(),
                kind: InstanceKind::Normal,
            },
        ]
    }

    #[test]
    fn round_trip_preserves_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("predictions.tsv");
        let records = sample();
        write_predictions(&path, &records).unwrap();
        assert_eq!(read_predictions(&path).unwrap(), records);
    }

    #[test]
    fn reread_metrics_are_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("predictions.tsv");
        let labels = LabelSet::for_task(Task::Cpi);
        let records = sample();
        let before = stratified_eval(&records, &labels).unwrap();
        write_predictions(&path, &records).unwrap();
        let after = stratified_eval(&read_predictions(&path).unwrap(), &labels).unwrap();
        assert_eq!(before, after);
        assert_eq!(
            before.micro.f1.to_bits(),
            after.micro.f1.to_bits(),
        );
    }

    #[test]
    fn field_counts_are_checked() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.tsv");
        std::fs::write(&path, "a\tb\tc\n").unwrap();
        let err = read_predictions(&path).unwrap_err().to_string();
        assert!(err.contains("4 tab-separated fields"), "{err}");
    }

    #[test]
    fn bad_kind_is_rejected_with_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.tsv");
        std::fs::write(&path, "a\tFalse\tFalse\tnormal\nb\tFalse\tFalse\tweird\n").unwrap();
        let err = read_predictions(&path).unwrap_err().to_string();
        assert!(err.contains("record 2"), "{err}");
        assert!(err.contains("weird"), "{err}");
    }

    #[test]
    fn tab_in_id_is_rejected_at_write_time() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("predictions.tsv");
        let mut records = sample();
        records[0].instance_id = "with\ttab".into();
        assert!(write_predictions(&path, &records).is_err());
    }
}
