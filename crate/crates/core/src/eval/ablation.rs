//! The six-variant ablation suite: every component subset of interest is
//! trained with the same seed and budget, then scored on the same split.

use std::fmt::Write as _;

use crate::config::TrainConfig;
use crate::dataset::EncodedInstance;
use crate::error::Result;
use crate::eval::{predict_records, stratified_eval, EvalReport, PredictionRecord};
use crate::fusion::{train, Ablation, Component};

/// Ablations in reporting order: the full model first, single components,
/// the title and knowledge pair, then everything at once.
pub fn ablation_variants() -> Vec<Ablation> {
    vec![
        Ablation::full(),
        Ablation::removing(&[Component::Gaussian]),
        Ablation::removing(&[Component::Title]),
        Ablation::removing(&[Component::Knowledge]),
        Ablation::removing(&[Component::Title, Component::Knowledge]),
        Ablation::removing(&Component::ALL),
    ]
}

pub struct AblationRow {
    pub label: String,
    pub ablation: Ablation,
    pub param_count: usize,
    pub best_epoch: usize,
    pub report: EvalReport,
    pub predictions: Vec<PredictionRecord>,
}

pub fn run_ablation_suite(
    train_set: &[EncodedInstance],
    dev_set: &[EncodedInstance],
    eval_set: &[EncodedInstance],
    base: &TrainConfig,
    vocab_size: usize,
) -> Result<Vec<AblationRow>> {
    ablation_variants()
        .into_iter()
        .map(|ablation| {
            let mut cfg = base.clone();
            cfg.ablate = ablation.clone();
            let outcome = train(train_set, dev_set, &cfg, vocab_size)?;
            let predictions = predict_records(&outcome.model, eval_set)?;
            let report = stratified_eval(&predictions, outcome.model.labels())?;
            log::info!(
                "ablation {}: micro F {:.4} ({} parameters)",
                ablation.label(),
                report.micro.f1,
                outcome.model.param_count()
            );
            Ok(AblationRow {
                label: ablation.label(),
                param_count: outcome.model.param_count(),
                best_epoch: outcome.best_epoch,
                report,
                predictions,
                ablation,
            })
        })
        .collect()
}

pub fn render_ablation_table(rows: &[AblationRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<28} {:>10} {:>6} {:>10} {:>10} {:>10} {:>8} {:>8}",
        "variant", "params", "best", "precision", "recall", "f1", "f1_over", "f1_norm"
    );
    for row in rows {
        let m = row.report.micro;
        let _ = writeln!(
            out,
            "{:<28} {:>10} {:>6} {:>10.4} {:>10.4} {:>10.4} {:>8.4} {:>8.4}",
            row.label,
            row.param_count,
            row.best_epoch,
            m.precision,
            m.recall,
            m.f1,
            row.report.by_kind["overlapping"].f1,
            row.report.by_kind["normal"].f1,
        );
    }
    out
}

pub fn render_ablation_csv(rows: &[AblationRow]) -> String {
    let mut out =
        String::from("variant,params,best_epoch,precision,recall,f1,f1_overlapping,f1_normal\n");
    for row in rows {
        let m = row.report.micro;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            row.label,
            row.param_count,
            row.best_epoch,
            m.precision,
            m.recall,
            m.f1,
            row.report.by_kind["overlapping"].f1,
            row.report.by_kind["normal"].f1,
        );
    }
    out
}
