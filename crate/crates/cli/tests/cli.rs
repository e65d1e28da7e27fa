use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nertk::corpus::{parse_conll, validate_bio, ColumnConfig};
use nertk::ensemble::PredictionSet;
use nertk::evaluate;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn nertk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nertk")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = nertk(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn fails_with(args: &[&str], code: i32) -> String {
    let out = nertk(args);
    assert_eq!(out.status.code(), Some(code), "{args:?}");
    assert!(out.stdout.is_empty());
    String::from_utf8(out.stderr).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn stats_matches_golden_file() {
    let out = ok(&["stats", s(&fixture("sample20.conll"))]);
    assert_eq!(out, fs::read_to_string(fixture("sample20.stats")).unwrap());
}

#[test]
fn missing_file_exits_with_io_code() {
    let err = fails_with(&["stats", "does-not-exist.conll"], 2);
    assert!(err.contains("does-not-exist.conll"));
}

#[test]
fn unknown_flag_is_rejected() {
    let out = nertk(&["stats", "--colour", s(&fixture("sample20.conll"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_corpus_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.conll");
    fs::write(&bad, "a B-PER extra\nb O\n").unwrap();
    let err = fails_with(&["stats", s(&bad)], 1);
    assert!(err.contains("bad.conll"), "{err}");
}

#[test]
fn config_errors_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    let model = dir.path().join("m.json");
    let data = fixture("sample20.conll");
    let train = |cfg_text: &str| {
        fs::write(&cfg, cfg_text).unwrap();
        fails_with(
            &["train", "--config", s(&cfg), "--train", s(&data), "--model-out", s(&model)],
            1,
        )
    };
    assert!(train("use_pos = true\nmax_epochs = 1\n").contains("use_pos"));
    assert!(train("hiden = 4\n").contains("hiden"));
    assert!(train("dropout = 1.5\n").contains("dropout"));
    assert!(!model.exists());
}

#[test]
fn gradcheck_passes_and_detects_faults() {
    let out = ok(&["gradcheck", "--seeds", "2"]);
    for name in ["embedding", "char-cnn", "bilstm", "mha", "linear", "crf"] {
        assert!(out.lines().any(|l| l.starts_with(name) && l.ends_with("pass")), "{out}");
    }
    let shifted = ok(&["--seed", "1000", "gradcheck", "--seeds", "2"]);
    assert_eq!(shifted.matches("pass").count(), out.matches("pass").count());
    assert_eq!(nertk(&["gradcheck", "--seeds", "1", "--inject-fault"]).status.code(), Some(1));
}

#[test]
fn gradcheck_follows_config() {
    let out = ok(&["gradcheck", "--config", s(&fixture("tiny.toml")), "--seeds", "1"]);
    assert!(out.contains("crf") && out.contains("bilstm"));
    assert!(!out.contains("char-cnn") && !out.contains("mha"));
}

#[test]
fn evaluate_identity_and_hand_case() {
    let dir = tempfile::tempdir().unwrap();
    let gold = dir.path().join("gold.conll");
    let pred = dir.path().join("pred.txt");
    fs::write(&gold, "# id a\nAna B-PER\nvisited O\nOslo B-LOC\n").unwrap();
    fs::write(&pred, "# id a\nAna B-PER B-PER 0.9\nvisited O O 0.9\nOslo B-LOC O 0.8\n").unwrap();
    let out = ok(&["evaluate", "--gold", s(&gold), "--pred", s(&pred)]);
    assert!(out.lines().any(|l| l == "macro_f1=0.5"), "{out}");
    assert_eq!(out, ok(&["evaluate", "--gold", s(&gold), "--pred", s(&pred)]));

    fs::write(&pred, "# id a\nAna B-PER B-PER 1\nvisited O O 1\nOslo B-LOC B-LOC 1\n").unwrap();
    let out = ok(&["evaluate", "--gold", s(&gold), "--pred", s(&pred)]);
    assert!(out.lines().any(|l| l == "macro_f1=1"), "{out}");

    fs::write(&pred, "# id b\nAna B-PER B-PER 1\nvisited O O 1\nOslo B-LOC B-LOC 1\n").unwrap();
    let err = fails_with(&["evaluate", "--gold", s(&gold), "--pred", s(&pred)], 1);
    assert!(err.contains("pred.txt"), "{err}");
}

#[test]
fn ensemble_of_identical_files_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    let reference = dir.path().join("ref.conll");
    let a = dir.path().join("a.txt");
    let b = dir.path().join("b.txt");
    let out = dir.path().join("e.txt");
    fs::write(&reference, "# id x\nAna B-PER\nran O\n").unwrap();
    let preds = "# id x\nAna B-PER B-PER 0.9\nran O O 0.8\n";
    fs::write(&a, preds).unwrap();
    fs::write(&b, preds).unwrap();
    ok(&["ensemble", s(&a), s(&b), "--reference", s(&reference), "--out", s(&out)]);
    let merged = fs::read_to_string(&out).unwrap();
    assert_eq!(merged, "# id x\nAna B-PER B-PER 1\nran O O 1\n");
    let diag = fs::read_to_string(dir.path().join("e.txt.diagnostics")).unwrap();
    assert!(diag.starts_with("# threshold=0.5 (default)\n"), "{diag}");

    ok(&["ensemble", s(&a), s(&b), "--reference", s(&reference), "--out", s(&out), "--threshold", "0.85"]);
    let diag = fs::read_to_string(dir.path().join("e.txt.diagnostics")).unwrap();
    assert!(diag.starts_with("# threshold=0.85\n"), "{diag}");
    assert!(fs::read_to_string(&out).unwrap().contains("Ana B-PER B-PER 1\nran O O 0\n"));

    fs::write(&b, "# id y\nAna B-PER B-PER 0.9\nran O O 0.8\n").unwrap();
    let err = fails_with(&["ensemble", s(&a), s(&b), "--reference", s(&reference), "--out", s(&out)], 1);
    assert!(err.contains("b.txt") && err.contains('y'), "{err}");
    assert_eq!(nertk(&["ensemble", s(&a), "--reference", s(&reference), "--out", s(&out)]).status.code(), Some(2));
}

#[test]
fn augment_plan_combines_translated_sources() {
    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("plan.toml");
    let lex = s(&fixture("lexicon.tsv")).to_string();
    let data = s(&fixture("sample20.conll")).to_string();
    fs::write(
        &plan,
        format!(
            "output = \"mixed\"\n\n\
             [[source]]\npath = \"{data}\"\nname = \"bn\"\nmax_sentences = 10\n\
             [source.translate]\nlexicon = \"{lex}\"\nsource_lang = \"en\"\ntarget_lang = \"bn\"\n\n\
             [[source]]\npath = \"{data}\"\nname = \"hi\"\nmax_sentences = 10\n\
             [source.translate]\nlexicon = \"{lex}\"\nsource_lang = \"en\"\ntarget_lang = \"bn\"\n"
        ),
    )
    .unwrap();
    let out = dir.path().join("mixed.conll");
    let report = ok(&["augment", "--plan", s(&plan), "--out", s(&out)]);
    assert_eq!(report, "mixed: 20 sentences\n");
    let manifest = fs::read_to_string(dir.path().join("mixed.conll.manifest")).unwrap();
    assert_eq!(manifest.lines().filter(|l| l.contains(": translate `")).count(), 2, "{manifest}");
    let corpus = parse_conll(&fs::read_to_string(&out).unwrap(), ColumnConfig::default(), "mixed").unwrap();
    assert_eq!(corpus.len(), 20);
    assert_eq!(corpus.sentences[0].id, "bn:s1");
    assert_eq!(corpus.sentences[10].id, "hi:s1");
    assert_eq!(corpus.sentences[1].tokens[2].surface, "এই");
}

#[test]
fn pipeline_runs_and_outputs_are_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    let out = ok(&[
        "split",
        s(&fixture("sample20.conll")),
        "--train-out",
        s(&p("train.conll")),
        "--dev-out",
        s(&p("dev.conll")),
    ]);
    assert_eq!(out, "train=14 dev=6 seed=42\n");

    let mut preds = Vec::new();
    for seed in ["1", "2", "3"] {
        let model = p(&format!("m{seed}.json"));
        ok(&[
            "--seed",
            seed,
            "train",
            "--config",
            s(&fixture("tiny.toml")),
            "--train",
            s(&p("train.conll")),
            "--dev",
            s(&p("dev.conll")),
            "--model-out",
            s(&model),
        ]);
        let history = fs::read_to_string(p(&format!("m{seed}.json.history"))).unwrap();
        assert!(history.lines().next().unwrap().starts_with("epoch=1 train_loss="));
        let pred = p(&format!("p{seed}.txt"));
        ok(&["predict", "--model", s(&model), "--corpus", s(&p("train.conll")), "--out", s(&pred)]);
        preds.push(pred);
    }

    let gold = parse_conll(&fs::read_to_string(p("train.conll")).unwrap(), ColumnConfig::default(), "g").unwrap();
    let set = PredictionSet::parse(&fs::read_to_string(&preds[0]).unwrap(), "p1").unwrap();
    for sent in &set.sentences {
        assert!(sent.gold.is_some());
        let labels: Vec<&str> = sent.predictions.iter().map(|t| t.label.as_str()).collect();
        assert!(validate_bio(&labels).is_empty());
    }
    let in_process = evaluate(&gold, &set.labels()).unwrap();
    let report = ok(&["evaluate", "--gold", s(&p("train.conll")), "--pred", s(&preds[0])]);
    assert!(report.lines().any(|l| l == format!("macro_f1={}", in_process.macro_f1)), "{report}");

    ok(&[
        "ensemble",
        s(&preds[0]),
        s(&preds[1]),
        s(&preds[2]),
        "--reference",
        s(&p("train.conll")),
        "--out",
        s(&p("ens.txt")),
    ]);
    let ens = PredictionSet::parse(&fs::read_to_string(p("ens.txt")).unwrap(), "ens").unwrap();
    assert_eq!(ens.sentences.len(), gold.len());
    ok(&["evaluate", "--gold", s(&p("train.conll")), "--pred", s(&p("ens.txt")), "--baseline", s(&preds[0])]);

    let unlabeled = p("raw.conll");
    let raw: String = fs::read_to_string(p("dev.conll"))
        .unwrap()
        .lines()
        .map(|l| if l.is_empty() || l.starts_with('#') { format!("{l}\n") } else { format!("{}\n", l.split(' ').next().unwrap()) })
        .collect();
    fs::write(&unlabeled, raw).unwrap();
    ok(&["predict", "--model", s(&p("m1.json")), "--corpus", s(&unlabeled), "--unlabeled", "--out", s(&p("raw.txt"))]);
    let tagged = fs::read_to_string(p("raw.txt")).unwrap();
    assert!(tagged.lines().filter(|l| !l.is_empty() && !l.starts_with('#')).all(|l| l.split(' ').count() == 3));
}
