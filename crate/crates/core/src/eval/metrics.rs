//! Precision/recall/F pooled over the positive labels, per-type scores,
//! and evaluation stratified by instance kind.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{InstanceKind, LabelSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    fn from_counts(tp: usize, fp: usize, fn_: usize) -> Prf {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf {
            precision,
            recall,
            f1,
        }
    }
}

/// One scored instance as it appears in a predictions file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub instance_id: String,
    pub gold: String,
    pub predicted: String,
    pub kind: InstanceKind,
}

/// Micro-averaged P/R/F: true/false positives and false negatives summed
/// over the positive labels only, zero where a denominator vanishes.
pub fn micro_prf(
    predictions: &[String],
    golds: &[String],
    positive_labels: &[&str],
) -> Result<Prf> {
    if predictions.len() != golds.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions against {} golds",
            predictions.len(),
            golds.len()
        )));
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (pred, gold) in predictions.iter().zip(golds) {
        let pred_pos = positive_labels.contains(&pred.as_str());
        let gold_pos = positive_labels.contains(&gold.as_str());
        if pred_pos && pred == gold {
            tp += 1;
        } else {
            if pred_pos {
                fp += 1;
            }
            if gold_pos {
                fn_ += 1;
            }
        }
    }
    Ok(Prf::from_counts(tp, fp, fn_))
}

/// Full evaluation: micro scores overall and per instance kind, per-type F
/// for every positive label, and the gold × predicted confusion matrix in
/// label-set order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub labels: Vec<String>,
    pub micro: Prf,
    pub per_type_f: BTreeMap<String, f64>,
    pub by_kind: BTreeMap<String, Prf>,
    pub kind_counts: BTreeMap<String, usize>,
    pub confusion: Vec<Vec<usize>>,
}

pub fn stratified_eval(records: &[PredictionRecord], labels: &LabelSet) -> Result<EvalReport> {
    for r in records {
        for (what, value) in [("gold", &r.gold), ("predicted", &r.predicted)] {
            if labels.index_of(value).is_none() {
                return Err(Error::validation(
                    r.instance_id.clone(),
                    format!("{what} label {value:?} not in the {:?} set", labels.task()),
                ));
            }
        }
    }
    let positives = labels.positive_names();

    let subset = |want: Option<InstanceKind>| -> Result<(Prf, usize)> {
        let picked: Vec<&PredictionRecord> = records
            .iter()
            .filter(|r| want.map_or(true, |k| r.kind == k))
            .collect();
        let preds: Vec<String> = picked.iter().map(|r| r.predicted.clone()).collect();
        let golds: Vec<String> = picked.iter().map(|r| r.gold.clone()).collect();
        Ok((micro_prf(&preds, &golds, positives)?, picked.len()))
    };

    let (micro, total) = subset(None)?;
    let (over, n_over) = subset(Some(InstanceKind::Overlapping))?;
    let (normal, n_normal) = subset(Some(InstanceKind::Normal))?;

    let mut confusion = vec![vec![0usize; labels.len()]; labels.len()];
    for r in records {
        let g = labels.index_of(&r.gold).unwrap();
        let p = labels.index_of(&r.predicted).unwrap();
        confusion[g][p] += 1;
    }

    let mut per_type_f = BTreeMap::new();
    for &label in positives {
        let i = labels.index_of(label).unwrap();
        let tp = confusion[i][i];
        let fp: usize = (0..labels.len()).filter(|&g| g != i).map(|g| confusion[g][i]).sum();
        let fn_: usize = (0..labels.len()).filter(|&p| p != i).map(|p| confusion[i][p]).sum();
        per_type_f.insert(label.to_string(), Prf::from_counts(tp, fp, fn_).f1);
    }

    Ok(EvalReport {
        labels: labels.names().iter().map(|s| s.to_string()).collect(),
        micro,
        per_type_f,
        by_kind: BTreeMap::from([
            ("all".to_string(), micro),
            ("overlapping".to_string(), over),
            ("normal".to_string(), normal),
        ]),
        kind_counts: BTreeMap::from([
            ("all".to_string(), total),
            ("overlapping".to_string(), n_over),
            ("normal".to_string(), n_normal),
        ]),
        confusion,
    })
}
