//! Scoring, prediction files, report rendering, the synthetic corpus
//! generator, and the ablation runner.

mod ablation;
mod metrics;
mod predictions;
mod report;
mod synth;

pub use ablation::{
    ablation_variants, render_ablation_csv, render_ablation_table, run_ablation_suite, AblationRow,
};
pub use metrics::{micro_prf, stratified_eval, EvalReport, PredictionRecord, Prf};
pub use predictions::{predict_records, read_predictions, write_predictions};
pub use report::{render_csv, render_table};
pub use synth::{make_synthetic_corpus, trigger_oracle, SynthPaths, SynthSpec, SyntheticCorpus, TRIGGERS};
