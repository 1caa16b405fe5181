//! Text renderings of an evaluation report: an aligned table for eyes and a
//! long-format CSV (scope, metric, value) carrying the same numbers.

use std::fmt::Write as _;

use crate::eval::EvalReport;

const KIND_ORDER: [&str; 3] = ["all", "overlapping", "normal"];

pub fn render_table(report: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<14} {:>6} {:>10} {:>10} {:>10}", "scope", "n", "precision", "recall", "f1");
    for kind in KIND_ORDER {
        let prf = report.by_kind[kind];
        let _ = writeln!(
            out,
            "{:<14} {:>6} {:>10.4} {:>10.4} {:>10.4}",
            kind, report.kind_counts[kind], prf.precision, prf.recall, prf.f1
        );
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "{:<14} {:>10}", "type", "f1");
    for (label, f1) in &report.per_type_f {
        let _ = writeln!(out, "{:<14} {:>10.4}", label, f1);
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "confusion (rows gold, columns predicted)");
    let width = report.labels.iter().map(|l| l.len()).max().unwrap_or(0).max(5);
    let _ = write!(out, "{:<width$}", "");
    for label in &report.labels {
        let _ = write!(out, " {label:>width$}");
    }
    let _ = writeln!(out);
    for (i, label) in report.labels.iter().enumerate() {
        let _ = write!(out, "{label:<width$}");
        for count in &report.confusion[i] {
            let _ = write!(out, " {count:>width$}");
        }
        let _ = writeln!(out);
    }
    out
}

pub fn render_csv(report: &EvalReport) -> String {
    let mut out = String::from("scope,metric,value\n");
    for kind in KIND_ORDER {
        let prf = report.by_kind[kind];
        let _ = writeln!(out, "{kind},count,{}", report.kind_counts[kind]);
        let _ = writeln!(out, "{kind},precision,{}", prf.precision);
        let _ = writeln!(out, "{kind},recall,{}", prf.recall);
        let _ = writeln!(out, "{kind},f1,{}", prf.f1);
    }
    for (label, f1) in &report.per_type_f {
        let _ = writeln!(out, "type:{label},f1,{f1}");
    }
    for (g, gold) in report.labels.iter().enumerate() {
        for (p, pred) in report.labels.iter().enumerate() {
            let _ = writeln!(out, "confusion:{gold}>{pred},count,{}", report.confusion[g][p]);
        }
    }
    out
}
