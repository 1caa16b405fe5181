use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_overlap-re"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name)
}

fn path_arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

const TINY_CONFIG: &str = "max_epochs = 2\npatience = 2\n\n[encoder]\nlayers = 1\nhidden = 32\nheads = 2\nfeed_forward = 64\nmax_len = 64\n";

fn synth_into(dir: &Path) {
    let out = run(&["synth", "--seed", "11", "--docs", "50", "--out", path_arg(dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn synth_same_seed_gives_identical_trees() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        let out = run(&["synth", "--seed", "7", "--docs", "50", "--out", path_arg(dir)]);
        assert!(out.status.success());
    }
    for name in ["train.jsonl", "dev.jsonl", "test.jsonl", "kb.tsv"] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name} differs between identical runs"
        );
    }
}

#[test]
fn stats_reports_the_hand_tallied_fixture() {
    let out = run(&["stats", "--input", path_arg(&fixture("mini_corpus.jsonl"))]);
    assert!(out.status.success());
    let text = stdout(&out);
    for needle in [
        "total              14",
        "overlapping        12",
        "normal              2",
        "CPR:3               2",
        "False               7",
    ] {
        assert!(text.contains(needle), "missing {needle:?} in:\n{text}");
    }
}

#[test]
fn stats_reads_benchmark_tsv() {
    let tmp = tempfile::tempdir().unwrap();
    let tsv = tmp.path().join("sample.tsv");
    fs::write(
        &tsv,
        "index\tsentence\tlabel\n\
         10.T1.T5\t@CHEMICAL$ binds @GENE$ and g6\tCPR:3\n\
         10.T1.T6\t@CHEMICAL$ binds g5 and @GENE$\tfalse\n\
         11.T1.T2\t@CHEMICAL$ blocks @GENE$\tCPR:6\n",
    )
    .unwrap();
    let out = run(&["stats", "--input", path_arg(&tsv), "--format", "blue"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("total               3"), "{text}");
    assert!(text.contains("overlapping         2"), "{text}");
    assert!(text.contains("normal              1"), "{text}");
}

#[test]
fn gradcheck_prints_error_bound_and_exits_zero() {
    let out = run(&["gradcheck"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("max relative error"), "{text}");
    assert!(text.contains("op softmax"), "{text}");
}

#[test]
fn unknown_flag_exits_two() {
    let out = run(&["train", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_input_exits_one_with_diagnostic() {
    let out = run(&["stats", "--input", "/nonexistent/corpus.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("/nonexistent/corpus.jsonl"), "{err}");
}

#[test]
fn prepare_writes_instances_prepared_and_vocab() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("prep");
    let out = run(&[
        "prepare",
        "--input",
        path_arg(&fixture("mini_corpus.jsonl")),
        "--kb",
        path_arg(&fixture("mini_kb.tsv")),
        "--out",
        path_arg(&out_dir),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["instances.jsonl", "prepared.jsonl", "vocab.json"] {
        assert!(out_dir.join(name).exists(), "{name} missing");
    }
    assert!(stdout(&out).contains("14 instances"));
    assert_eq!(
        fs::read_to_string(out_dir.join("instances.jsonl")).unwrap().lines().count(),
        14
    );
}

#[test]
fn convert_writes_instances_jsonl() {
    let tmp = tempfile::tempdir().unwrap();
    let tsv = tmp.path().join("blue.tsv");
    fs::write(&tsv, "12.T1.T2\t@CHEMICAL$ inhibits @GENE$ today\tCPR:4\n").unwrap();
    let out_dir = tmp.path().join("conv");
    let out = run(&["convert", "--input", path_arg(&tsv), "--out", path_arg(&out_dir)]);
    assert!(out.status.success());
    let lines = fs::read_to_string(out_dir.join("instances.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 1);
    assert!(lines.contains("\"CPR:4\""));

    let stats = run(&[
        "stats",
        "--input",
        path_arg(&out_dir.join("instances.jsonl")),
        "--format",
        "instances",
    ]);
    assert!(stats.status.success());
    assert!(stdout(&stats).contains("normal              1"));
}

#[test]
fn train_and_eval_are_deterministic_and_stay_inside_out() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth_into(&data);
    let cfg = tmp.path().join("run.toml");
    fs::write(&cfg, TINY_CONFIG).unwrap();

    let train_args = |out_dir: &Path| {
        vec![
            "train".to_string(),
            "--input".into(),
            data.join("train.jsonl").display().to_string(),
            "--dev".into(),
            data.join("dev.jsonl").display().to_string(),
            "--kb".into(),
            data.join("kb.tsv").display().to_string(),
            "--config".into(),
            cfg.display().to_string(),
            "--seed".into(),
            "5".into(),
            "--out".into(),
            out_dir.display().to_string(),
        ]
    };
    let m1 = tmp.path().join("m1");
    let m2 = tmp.path().join("m2");
    for dir in [&m1, &m2] {
        let out = bin().args(train_args(dir)).output().unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        for name in ["model.ckpt", "vocab.json", "config.toml", "train_log.csv"] {
            assert!(dir.join(name).exists(), "{name} missing");
        }
    }
    for name in ["model.ckpt", "vocab.json", "train_log.csv"] {
        assert_eq!(
            fs::read(m1.join(name)).unwrap(),
            fs::read(m2.join(name)).unwrap(),
            "{name} differs across identical runs"
        );
    }

    let e1 = tmp.path().join("e1");
    let e2 = tmp.path().join("e2");
    for dir in [&e1, &e2] {
        let out = run(&[
            "eval",
            "--input",
            path_arg(&data.join("test.jsonl")),
            "--model",
            path_arg(&m1),
            "--kb",
            path_arg(&data.join("kb.tsv")),
            "--out",
            path_arg(dir),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert!(stdout(&out).contains("scope"));
    }
    for name in ["predictions.tsv", "report.txt", "report.csv"] {
        assert_eq!(
            fs::read(e1.join(name)).unwrap(),
            fs::read(e2.join(name)).unwrap(),
            "{name} differs across identical runs"
        );
    }
}

#[test]
fn eval_rejects_mismatched_vocabulary() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth_into(&data);
    let cfg = tmp.path().join("run.toml");
    fs::write(&cfg, TINY_CONFIG).unwrap();
    let model_dir = tmp.path().join("model");
    let out = run(&[
        "train",
        "--input",
        path_arg(&data.join("train.jsonl")),
        "--dev",
        path_arg(&data.join("dev.jsonl")),
        "--config",
        path_arg(&cfg),
        "--out",
        path_arg(&model_dir),
    ]);
    assert!(out.status.success());

    // A vocabulary from different documents has a different fingerprint.
    let other = tmp.path().join("other");
    let out = run(&["synth", "--seed", "99", "--docs", "50", "--out", path_arg(&other)]);
    assert!(out.status.success());
    let prep = tmp.path().join("prep");
    let out = run(&[
        "prepare",
        "--input",
        path_arg(&other.join("train.jsonl")),
        "--out",
        path_arg(&prep),
    ]);
    assert!(out.status.success());
    fs::copy(prep.join("vocab.json"), model_dir.join("vocab.json")).unwrap();

    let out = run(&[
        "eval",
        "--input",
        path_arg(&data.join("test.jsonl")),
        "--model",
        path_arg(&model_dir),
        "--out",
        path_arg(&tmp.path().join("eval")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("does not match"));
}

#[test]
fn ablate_emits_six_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth_into(&data);
    let cfg = tmp.path().join("run.toml");
    fs::write(&cfg, "max_epochs = 1\npatience = 1\n\n[encoder]\nlayers = 1\nhidden = 32\nheads = 2\nfeed_forward = 64\nmax_len = 64\n").unwrap();
    let out_dir = tmp.path().join("ablate");
    let out = run(&[
        "ablate",
        "--input",
        path_arg(&data.join("train.jsonl")),
        "--dev",
        path_arg(&data.join("dev.jsonl")),
        "--kb",
        path_arg(&data.join("kb.tsv")),
        "--config",
        path_arg(&cfg),
        "--out",
        path_arg(&out_dir),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = fs::read_to_string(out_dir.join("ablation.txt")).unwrap();
    for label in [
        "full",
        "-gaussian",
        "-title",
        "-knowledge",
        "-title&knowledge",
        "-gaussian&title&knowledge",
    ] {
        assert!(table.contains(label), "missing {label} in:\n{table}");
    }
    assert!(out_dir.join("ablation.csv").exists());
}

#[test]
fn train_accepts_ablate_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth_into(&data);
    let cfg = tmp.path().join("run.toml");
    fs::write(&cfg, "max_epochs = 1\npatience = 1\n\n[encoder]\nlayers = 1\nhidden = 32\nheads = 2\nfeed_forward = 64\nmax_len = 64\n").unwrap();
    let out_dir = tmp.path().join("model");
    let out = run(&[
        "train",
        "--input",
        path_arg(&data.join("train.jsonl")),
        "--dev",
        path_arg(&data.join("dev.jsonl")),
        "--config",
        path_arg(&cfg),
        "--ablate",
        "gaussian,title",
        "--out",
        path_arg(&out_dir),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("-gaussian&title"));
    let echoed = fs::read_to_string(out_dir.join("config.toml")).unwrap();
    assert!(echoed.contains("gaussian") && echoed.contains("title"), "{echoed}");
}
