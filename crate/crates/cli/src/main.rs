//! One executable over the whole pipeline. Every subcommand takes all
//! randomness from --seed (or the config file), writes only under its
//! --out directory, and produces byte-identical output for identical
//! inputs. OVERLAP_RE_LOG={error,info,debug} controls logging.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};

use overlap_re::config::TrainConfig;
use overlap_re::corpus::{
    blue::parse_blue_tsv, corpus_stats, generate_instances, instances::write_instances,
    parse_corpus, AnnotatedDocument, CorpusFormat, Instance, LabelSet, SplitStats, Task, Vocab,
};
use overlap_re::dataset::{encode_dataset, prepare_dataset, write_prepared, EncodedInstance};
use overlap_re::eval::{
    make_synthetic_corpus, predict_records, render_ablation_csv, render_ablation_table,
    render_csv, render_table, run_ablation_suite, stratified_eval, write_predictions, SynthSpec,
};
use overlap_re::fusion::{model_grad_check, train, Ablation, Model};
use overlap_re::kb::{load_kb, KnowledgeBase};
use overlap_re::numerics::{op_grad_suite, Checkpoint};

#[derive(Parser)]
#[command(name = "overlap-re", version, about = "Chemical-protein relation extraction pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Expand an annotated corpus into masked candidate-pair instances with
    /// title tokens and knowledge sequences.
    Prepare(PrepareArgs),
    /// Print instance counts: totals, overlapping/normal split, per-label.
    Stats(StatsArgs),
    /// Train a model and save checkpoint, vocabulary, and training log.
    Train(TrainArgs),
    /// Evaluate a trained model: stratified report plus predictions file.
    Eval(EvalArgs),
    /// Train the six ablation variants and report them side by side.
    Ablate(AblateArgs),
    /// Generate the synthetic position-resolvable benchmark corpus.
    Synth(SynthArgs),
    /// Audit analytic gradients against central differences.
    Gradcheck(GradcheckArgs),
    /// Convert benchmark TSV instances to the instance JSONL format.
    Convert(ConvertArgs),
}

#[derive(Args)]
struct PrepareArgs {
    /// Annotated corpus, one JSON document per line.
    #[arg(long)]
    input: PathBuf,
    /// Knowledge base TSV (chemical, protein, tag); omit for none.
    #[arg(long)]
    kb: Option<PathBuf>,
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_task)]
    task: Option<Task>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    input: PathBuf,
    /// Input layout: an annotated corpus, converted instances, or the
    /// benchmark TSV.
    #[arg(long, default_value = "corpus", value_parser = ["corpus", "instances", "blue"])]
    format: String,
    #[arg(long, value_parser = parse_task)]
    task: Option<Task>,
}

#[derive(Args)]
struct TrainArgs {
    /// Training corpus JSONL.
    #[arg(long)]
    input: PathBuf,
    /// Development corpus JSONL for early stopping.
    #[arg(long)]
    dev: PathBuf,
    #[arg(long)]
    kb: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config file seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_task)]
    task: Option<Task>,
    /// Components to remove, e.g. "gaussian" or "title,knowledge" or "all".
    #[arg(long)]
    ablate: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Corpus JSONL to evaluate on.
    #[arg(long)]
    input: PathBuf,
    /// Directory produced by `train` (model.ckpt + vocab.json).
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    kb: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    dev: PathBuf,
    /// Held-out split for the reported numbers; defaults to --dev.
    #[arg(long)]
    eval: Option<PathBuf>,
    #[arg(long)]
    kb: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_task)]
    task: Option<Task>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    docs: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 21)]
    seed: u64,
}

#[derive(Args)]
struct ConvertArgs {
    /// Benchmark TSV: index, sentence, label.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "cpi", value_parser = parse_task)]
    task: Task,
    #[arg(long)]
    out: PathBuf,
}

fn parse_task(s: &str) -> Result<Task, String> {
    s.parse().map_err(|e: overlap_re::Error| e.to_string())
}

/// Die quietly when a downstream pipe closes, the way cat and grep do,
/// instead of panicking mid-println.
#[cfg(unix)]
fn reset_sigpipe() {
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
}

#[cfg(not(unix))]
fn reset_sigpipe() {}

fn main() {
    reset_sigpipe();
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("OVERLAP_RE_LOG", "error"))
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Prepare(args) => cmd_prepare(args),
        Command::Stats(args) => cmd_stats(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Ablate(args) => cmd_ablate(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
        Command::Convert(args) => cmd_convert(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

/// Config file merged with the command-line overrides, validated.
fn effective_config(
    config: Option<&Path>,
    seed: Option<u64>,
    task: Option<Task>,
    ablate: Option<&str>,
) -> anyhow::Result<TrainConfig> {
    let mut cfg = match config {
        Some(path) => TrainConfig::load(path)
            .with_context(|| format!("loading config {}", path.display()))?,
        None => TrainConfig::default(),
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(task) = task {
        cfg.task = task;
    }
    if let Some(list) = ablate {
        cfg.ablate = Ablation::parse(list)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn read_docs(path: &Path, task: Task) -> anyhow::Result<Vec<AnnotatedDocument>> {
    parse_corpus(path, &CorpusFormat { task })
        .with_context(|| format!("reading corpus {}", path.display()))
}

fn read_kb(path: Option<&Path>) -> anyhow::Result<KnowledgeBase> {
    match path {
        Some(path) => {
            load_kb(path).with_context(|| format!("reading knowledge base {}", path.display()))
        }
        None => Ok(KnowledgeBase::default()),
    }
}

fn encode_docs(
    docs: &[AnnotatedDocument],
    kb: &KnowledgeBase,
    vocab: &Vocab,
    labels: &LabelSet,
) -> anyhow::Result<Vec<EncodedInstance>> {
    let prepared = prepare_dataset(docs, kb, vocab)?;
    Ok(encode_dataset(&prepared, vocab, labels)?)
}

fn ensure_out(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn print_stats(heading: &str, stats: &SplitStats) {
    println!("{heading}");
    println!("  total        {:>8}", stats.total);
    println!("  overlapping  {:>8}", stats.overlapping);
    println!("  normal       {:>8}", stats.normal);
    println!("  labels");
    for (label, n) in &stats.label_counts {
        println!("    {label:<12} {n:>8}");
    }
}

fn cmd_prepare(args: PrepareArgs) -> anyhow::Result<()> {
    let cfg = effective_config(args.config.as_deref(), None, args.task, None)?;
    let task = args.task.unwrap_or(cfg.task);
    let docs = read_docs(&args.input, task)?;
    let kb = read_kb(args.kb.as_deref())?;
    let vocab = overlap_re::corpus::build_vocab(&docs, cfg.vocab.max_size, cfg.vocab.min_freq as u64)?;

    let mut instances = Vec::new();
    for doc in &docs {
        instances.extend(generate_instances(doc)?);
    }
    let prepared = prepare_dataset(&docs, &kb, &vocab)?;

    ensure_out(&args.out)?;
    write_instances(&args.out.join("instances.jsonl"), &instances)?;
    write_prepared(&args.out.join("prepared.jsonl"), &prepared)?;
    vocab.save(&args.out.join("vocab.json"))?;

    print_stats(
        &format!("{} documents -> {} instances", docs.len(), instances.len()),
        &corpus_stats(&instances),
    );
    println!("vocabulary: {} units", vocab.len());
    println!("wrote instances.jsonl, prepared.jsonl, vocab.json to {}", args.out.display());
    Ok(())
}

fn cmd_stats(args: StatsArgs) -> anyhow::Result<()> {
    let task = args.task.unwrap_or_default();
    let instances: Vec<Instance> = match args.format.as_str() {
        "corpus" => {
            let docs = read_docs(&args.input, task)?;
            let mut all = Vec::new();
            for doc in &docs {
                all.extend(generate_instances(doc)?);
            }
            all
        }
        "instances" => overlap_re::corpus::instances::read_instances(&args.input)?,
        "blue" => parse_blue_tsv(&args.input, task)?,
        other => bail!("unknown format {other}"),
    };
    print_stats(
        &format!("{} ({})", args.input.display(), args.format),
        &corpus_stats(&instances),
    );
    Ok(())
}

fn cmd_train(args: TrainArgs) -> anyhow::Result<()> {
    let cfg = effective_config(
        args.config.as_deref(),
        args.seed,
        args.task,
        args.ablate.as_deref(),
    )?;
    let train_docs = read_docs(&args.input, cfg.task)?;
    let dev_docs = read_docs(&args.dev, cfg.task)?;
    let kb = read_kb(args.kb.as_deref())?;
    let vocab =
        overlap_re::corpus::build_vocab(&train_docs, cfg.vocab.max_size, cfg.vocab.min_freq as u64)?;
    let labels = LabelSet::for_task(cfg.task);
    let train_set = encode_docs(&train_docs, &kb, &vocab, &labels)?;
    let dev_set = encode_docs(&dev_docs, &kb, &vocab, &labels)?;

    let outcome = train(&train_set, &dev_set, &cfg, vocab.len())?;

    ensure_out(&args.out)?;
    outcome
        .model
        .to_checkpoint(vocab.fingerprint())?
        .save(&args.out.join("model.ckpt"))?;
    vocab.save(&args.out.join("vocab.json"))?;
    fs::write(&args.out.join("config.toml"), toml::to_string_pretty(&cfg)?)?;
    let mut log_csv = String::from("epoch,train_loss,dev_precision,dev_recall,dev_f1\n");
    for r in &outcome.log {
        log_csv.push_str(&format!(
            "{},{},{},{},{}\n",
            r.epoch, r.train_loss, r.dev_precision, r.dev_recall, r.dev_f1
        ));
    }
    fs::write(&args.out.join("train_log.csv"), log_csv)?;

    println!(
        "trained {} ({} parameters) on {} instances for {} epochs",
        cfg.ablate.label(),
        outcome.model.param_count(),
        train_set.len(),
        outcome.log.len()
    );
    println!(
        "best dev micro-F {:.4} at epoch {}",
        outcome.best_dev_f1, outcome.best_epoch
    );
    println!("wrote model.ckpt, vocab.json, config.toml, train_log.csv to {}", args.out.display());
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> anyhow::Result<()> {
    let ckpt_path = args.model.join("model.ckpt");
    let vocab_path = args.model.join("vocab.json");
    let ckpt = Checkpoint::load(&ckpt_path)
        .with_context(|| format!("loading {}", ckpt_path.display()))?;
    let vocab =
        Vocab::load(&vocab_path).with_context(|| format!("loading {}", vocab_path.display()))?;
    if vocab.fingerprint() != ckpt.vocab_hash {
        bail!(
            "vocabulary {} does not match the one the checkpoint was trained with",
            vocab_path.display()
        );
    }
    let model = Model::from_checkpoint(&ckpt)?;

    let docs = read_docs(&args.input, model.config().task)?;
    let kb = read_kb(args.kb.as_deref())?;
    let encoded = encode_docs(&docs, &kb, &vocab, model.labels())?;
    let records = predict_records(&model, &encoded)?;
    let report = stratified_eval(&records, model.labels())?;

    ensure_out(&args.out)?;
    write_predictions(&args.out.join("predictions.tsv"), &records)?;
    let table = render_table(&report);
    fs::write(&args.out.join("report.txt"), &table)?;
    fs::write(&args.out.join("report.csv"), render_csv(&report))?;

    print!("{table}");
    println!("wrote predictions.tsv, report.txt, report.csv to {}", args.out.display());
    Ok(())
}

fn cmd_ablate(args: AblateArgs) -> anyhow::Result<()> {
    let cfg = effective_config(args.config.as_deref(), args.seed, args.task, None)?;
    let train_docs = read_docs(&args.input, cfg.task)?;
    let dev_docs = read_docs(&args.dev, cfg.task)?;
    let eval_docs = match &args.eval {
        Some(path) => read_docs(path, cfg.task)?,
        None => dev_docs.clone(),
    };
    let kb = read_kb(args.kb.as_deref())?;
    let vocab =
        overlap_re::corpus::build_vocab(&train_docs, cfg.vocab.max_size, cfg.vocab.min_freq as u64)?;
    let labels = LabelSet::for_task(cfg.task);
    let train_set = encode_docs(&train_docs, &kb, &vocab, &labels)?;
    let dev_set = encode_docs(&dev_docs, &kb, &vocab, &labels)?;
    let eval_set = encode_docs(&eval_docs, &kb, &vocab, &labels)?;

    let rows = run_ablation_suite(&train_set, &dev_set, &eval_set, &cfg, vocab.len())?;

    ensure_out(&args.out)?;
    let table = render_ablation_table(&rows);
    fs::write(&args.out.join("ablation.txt"), &table)?;
    fs::write(&args.out.join("ablation.csv"), render_ablation_csv(&rows))?;

    print!("{table}");
    println!("wrote ablation.txt, ablation.csv to {}", args.out.display());
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> anyhow::Result<()> {
    let corpus = make_synthetic_corpus(args.seed, args.docs, &SynthSpec::default())?;
    ensure_out(&args.out)?;
    let paths = corpus.write(&args.out)?;

    for (name, docs) in [
        ("train", &corpus.train),
        ("dev", &corpus.dev),
        ("test", &corpus.test),
    ] {
        let mut instances = Vec::new();
        for doc in docs.iter() {
            instances.extend(generate_instances(doc)?);
        }
        print_stats(
            &format!("{name} ({} documents)", docs.len()),
            &corpus_stats(&instances),
        );
    }
    println!("knowledge base: {} rows", corpus.kb_rows.len());
    println!(
        "wrote {}, {}, {}, {}",
        paths.train.display(),
        paths.dev.display(),
        paths.test.display(),
        paths.kb.display()
    );
    Ok(())
}

fn cmd_gradcheck(args: GradcheckArgs) -> anyhow::Result<()> {
    let mut worst_op = 0.0f64;
    for (name, report) in op_grad_suite()? {
        println!("op {name:<26} max rel err {:.3e}", report.max_rel_err);
        worst_op = worst_op.max(report.max_rel_err);
    }
    let model_report = model_grad_check(args.seed)?;
    println!(
        "full model: max relative error {:.3e} over {} entries{}",
        model_report.max_rel_err,
        model_report.entries_checked,
        model_report
            .worst
            .as_ref()
            .map(|(name, idx)| format!(" (worst {name}[{idx}])"))
            .unwrap_or_default()
    );
    if worst_op > 1e-5 || model_report.max_rel_err > 1e-4 {
        return Err(anyhow!(
            "gradient audit failed: per-op worst {worst_op:.3e} (limit 1e-5), model {:.3e} (limit 1e-4)",
            model_report.max_rel_err
        ));
    }
    Ok(())
}

fn cmd_convert(args: ConvertArgs) -> anyhow::Result<()> {
    let instances = parse_blue_tsv(&args.input, args.task)
        .with_context(|| format!("converting {}", args.input.display()))?;
    ensure_out(&args.out)?;
    write_instances(&args.out.join("instances.jsonl"), &instances)?;
    print_stats(&format!("{}", args.input.display()), &corpus_stats(&instances));
    println!("wrote instances.jsonl to {}", args.out.display());
    Ok(())
}
