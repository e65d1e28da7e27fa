//! Acceptance checks. Prints one `[PASS]`/`[FAIL]` line per criterion and
//! exits nonzero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nertk::augment::{combine, token_translate, Lexicon, LexiconBackend, TranslateFallback};
use nertk::corpus::{extract_chunks, split_corpus, LabeledCorpus, Sentence, Token};
use nertk::crf::{crf_marginals, log_partition, viterbi, TransitionMatrix};
use nertk::ensemble::{ensemble_corpus, majority_vote, PredictedSentence, PredictionSet, VoteConfig};
use nertk::eval::evaluate;
use nertk::gradsuite::{run_suite, Component};
use nertk::nn::Matrix;
use nertk::synth::{synthetic_corpus, SynthSpec};
use nertk::tagger::{build_model, evaluate_model, train, EarlyStopping, StopMetric, TaggerConfig, TokenPrediction};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let t = start.elapsed();
    ensure(t < limit, || format!("took {t:.1?}, limit {limit:?}"))
}

const LABELS: [&str; 7] = ["O", "B-PER", "I-PER", "B-LOC", "I-LOC", "B-ORG", "I-ORG"];

/// Straightforward BIO repair: an `I-X` that does not continue an `X` chunk
/// becomes `B-X`.
fn oracle_repair(tags: &[String]) -> Vec<String> {
    let mut out: Vec<String> = Vec::with_capacity(tags.len());
    for t in tags {
        let fixed = match t.strip_prefix("I-") {
            Some(class) => {
                let continues = out
                    .last()
                    .and_then(|p| p.get(2..))
                    .is_some_and(|prev| prev == class && out.last().unwrap() != "O");
                if continues {
                    t.clone()
                } else {
                    format!("B-{class}")
                }
            }
            None => t.clone(),
        };
        out.push(fixed);
    }
    out
}

fn random_tags(rng: &mut ChaCha8Rng, len: usize) -> Vec<String> {
    let raw: Vec<String> = (0..len).map(|_| LABELS[rng.random_range(0..LABELS.len())].to_string()).collect();
    oracle_repair(&raw)
}

fn crf_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut worst = 0.0f64;
    for case in 0..500 {
        let n = rng.random_range(1..=4);
        let t = rng.random_range(1..=4);
        let mut draw = |k: usize| -> Vec<f64> { (0..k).map(|_| rng.random_range(-3.0..3.0)).collect() };
        let e = Matrix::from_vec(n, t, draw(n * t)).unwrap();
        let tr = TransitionMatrix::new(Matrix::from_vec(t, t, draw(t * t)).unwrap(), draw(t), draw(t)).unwrap();

        let score = |path: &[usize]| -> f64 {
            let mut s = tr.start[path[0]] + tr.end[path[n - 1]];
            for (i, &y) in path.iter().enumerate() {
                s += e[(i, y)];
                if i > 0 {
                    s += tr.scores[(path[i - 1], y)];
                }
            }
            s
        };
        let paths: Vec<Vec<usize>> = (0..t.pow(n as u32))
            .map(|mut code| {
                let mut p = vec![0; n];
                for slot in p.iter_mut().rev() {
                    *slot = code % t;
                    code /= t;
                }
                p
            })
            .collect();
        let scores: Vec<f64> = paths.iter().map(|p| score(p)).collect();
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_z = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
        let mut marg = vec![vec![0.0; t]; n];
        for (p, s) in paths.iter().zip(&scores) {
            let w = (s - log_z).exp();
            for (i, &y) in p.iter().enumerate() {
                marg[i][y] += w;
            }
        }

        let got_z = log_partition(&e, &tr).map_err(|e| e.to_string())?;
        let (path, vscore) = viterbi(&e, &tr).map_err(|e| e.to_string())?;
        let got_m = crf_marginals(&e, &tr).map_err(|e| e.to_string())?;
        let mut errs = vec![(got_z - log_z).abs(), (vscore - max).abs(), (score(&path) - max).abs()];
        for (i, row) in marg.iter().enumerate() {
            for (y, m) in row.iter().enumerate() {
                errs.push((got_m[(i, y)] - m).abs());
            }
        }
        let err = errs.iter().cloned().fold(0.0, f64::max);
        ensure(err <= 1e-9, || format!("case {case} (n={n}, T={t}): deviation {err:e}"))?;
        worst = worst.max(err);
    }
    within(start, Duration::from_secs(10))?;
    Ok(format!("500 instances, max deviation {worst:.1e}, {:.2?}", start.elapsed()))
}

fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let checks = run_suite(&Component::ALL, 0..20, false).map_err(|e| e.to_string())?;
    if let Some(bad) = checks.iter().find(|c| !c.passed()) {
        return Err(format!("{} seed {} max rel err {:e}", bad.component, bad.seed, bad.max_rel_err()));
    }
    let faulty = run_suite(&Component::ALL, 0..1, true).map_err(|e| e.to_string())?;
    ensure(faulty.iter().all(|c| !c.passed()), || "an injected gradient fault went undetected".into())?;
    within(start, Duration::from_secs(60))?;
    let worst: Vec<String> = Component::ALL
        .iter()
        .map(|&c| {
            let m = checks.iter().filter(|k| k.component == c).map(|k| k.max_rel_err()).fold(0.0, f64::max);
            format!("{}={m:.1e}", c.name())
        })
        .collect();
    Ok(format!("6 components x 20 seeds, {}, {:.2?}", worst.join(" "), start.elapsed()))
}

fn overfit() -> Outcome {
    let start = Instant::now();
    let corpus = synthetic_corpus("syn", &SynthSpec::new(32, &["PER", "LOC", "ORG"], 42));
    let config = TaggerConfig {
        word_dim: 16,
        hidden: 16,
        lstm_layers: 1,
        use_crf: true,
        learning_rate: 1e-3,
        dropout: 0.0,
        weight_decay: 0.0,
        batch_size: 4,
        max_epochs: 300,
        patience: 300,
        ..TaggerConfig::default()
    };
    let model = build_model(&config, &corpus, None, None).map_err(|e| e.to_string())?;
    let (model, history) = train(model, &corpus, &corpus, None).map_err(|e| e.to_string())?;
    let f1 = evaluate_model(&model, &corpus, None).map_err(|e| e.to_string())?.report.macro_f1;
    let first = history.epochs.iter().find(|r| r.eval_macro_f1 >= 0.99).map(|r| r.epoch);
    ensure(f1 >= 0.99, || format!("train macro F1 {f1:.4} after {} epochs", history.stopped_epoch))?;
    within(start, Duration::from_secs(60))?;
    Ok(format!("macro F1 {f1:.4}, first >= 0.99 at epoch {}, {:.2?}", first.unwrap_or(0), start.elapsed()))
}

fn early_stopping() -> Outcome {
    let run = |metric: StopMetric, values: &[f64]| -> (usize, usize) {
        let mut stop = EarlyStopping::new(metric, 5).unwrap();
        for (i, &v) in values.iter().enumerate() {
            stop.observe(i + 1, v);
            if stop.should_stop() {
                return (i + 1, stop.best_epoch());
            }
        }
        (values.len(), stop.best_epoch())
    };
    let cases: [(StopMetric, &[f64], (usize, usize)); 4] = [
        (StopMetric::EvalLoss, &[1.0, 0.9, 0.95, 0.96, 0.97, 0.98, 0.99], (7, 2)),
        (StopMetric::EvalLoss, &[1.0, 0.9, 0.95, 0.96, 0.89, 0.97, 0.98, 0.99, 0.99, 0.99, 0.5], (10, 5)),
        (StopMetric::EvalF1, &[0.1, 0.2, 0.3, 0.3, 0.3, 0.3, 0.3, 0.3, 0.9], (8, 3)),
        (StopMetric::EvalF1, &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6], (6, 6)),
    ];
    for (metric, values, expected) in cases {
        let got = run(metric, values);
        ensure(got == expected, || format!("{values:?}: (stop, best) = {got:?}, expected {expected:?}"))?;
    }
    Ok("4 scripted sequences, [1.0, 0.9, 0.95..0.99] stops at 7 with best 2".into())
}

/// Votes are scored on a 1/64 grid so sums are exact and score ties are real.
fn random_vote(rng: &mut ChaCha8Rng) -> TokenPrediction {
    TokenPrediction::new(LABELS[rng.random_range(0..LABELS.len())], rng.random_range(0..=64) as f64 / 64.0)
}

/// The voting rule from first principles, in integer 1/64 units.
fn oracle_vote(votes: &[TokenPrediction]) -> String {
    let units = |s: f64| (s * 64.0).round() as i64;
    let survivors: Vec<&TokenPrediction> = votes.iter().filter(|v| units(v.score) > 32).collect();
    if survivors.is_empty() {
        return "O".into();
    }
    let mut labels: Vec<&str> = survivors.iter().map(|v| v.label.as_str()).collect();
    labels.sort();
    labels.dedup();
    for l in &labels {
        if 2 * survivors.iter().filter(|v| v.label == *l).count() > votes.len() {
            return l.to_string();
        }
    }
    let total = |l: &str| survivors.iter().filter(|v| v.label == l).map(|v| units(v.score)).sum::<i64>();
    let best = labels.iter().map(|l| total(l)).max().unwrap();
    labels.into_iter().find(|l| total(l) == best).unwrap().to_string()
}

fn ensemble_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let reference = synthetic_corpus("ref", &SynthSpec::new(50, &["PER", "LOC", "ORG"], 42));
    let sets: Vec<PredictionSet> = (0..8)
        .map(|m| PredictionSet {
            model_id: format!("m{m}"),
            sentences: reference
                .sentences
                .iter()
                .map(|s| PredictedSentence {
                    id: s.id.clone(),
                    tokens: s.tokens.iter().map(|t| t.surface.clone()).collect(),
                    gold: Some(s.gold_tags()),
                    // Models agree with the reference often enough that both majority and fallback occur.
                    predictions: s
                        .tokens
                        .iter()
                        .map(|t| {
                            let mut v = random_vote(&mut rng);
                            if rng.random_bool(0.9) {
                                v.label = t.gold_tag.clone();
                            }
                            v
                        })
                        .collect(),
                })
                .collect(),
        })
        .collect();
    let out = ensemble_corpus(&sets, &reference, &VoteConfig::default()).map_err(|e| e.to_string())?;
    let mut tokens = 0;
    for (si, s) in reference.sentences.iter().enumerate() {
        let raw: Vec<String> = (0..s.len())
            .map(|ti| {
                let votes: Vec<TokenPrediction> =
                    sets.iter().map(|set| set.sentences[si].predictions[ti].clone()).collect();
                oracle_vote(&votes)
            })
            .collect();
        let expected = oracle_repair(&raw);
        let got: Vec<&str> = out.predictions[si].iter().map(|p| p.label.as_str()).collect();
        ensure(got == expected, || format!("sentence {}: {got:?} vs oracle {expected:?}", s.id))?;
        tokens += s.len();
    }

    let cfg = VoteConfig::default();
    for case in 0..1000 {
        let n = rng.random_range(1..=9);
        let votes: Vec<TokenPrediction> = (0..n).map(|_| random_vote(&mut rng)).collect();
        let mut shuffled = votes.clone();
        shuffled.shuffle(&mut rng);
        let a = majority_vote(&votes, &cfg).map_err(|e| e.to_string())?;
        let b = majority_vote(&shuffled, &cfg).map_err(|e| e.to_string())?;
        ensure(a == b, || format!("case {case}: permutation changed {a:?} to {b:?}"))?;
        ensure(a.label == oracle_vote(&votes), || format!("case {case}: {} vs oracle", a.label))?;

        let label = LABELS[rng.random_range(0..LABELS.len())];
        let unanimous: Vec<TokenPrediction> =
            (0..n).map(|_| TokenPrediction::new(label, rng.random_range(33..=64) as f64 / 64.0)).collect();
        let u = majority_vote(&unanimous, &cfg).map_err(|e| e.to_string())?;
        ensure(u.label == label && !u.fallback_used, || format!("case {case}: unanimous {label} gave {}", u.label))?;
    }
    Ok(format!(
        "8 sets x 50 sentences ({tokens} tokens, {} fallbacks) match the oracle; 1000 permutation and unanimity cases",
        out.fallback_count()
    ))
}

type Span = (usize, String, usize, usize);

fn set_scorer(gold: &[Vec<String>], pred: &[Vec<String>]) -> BTreeMap<String, (usize, usize, usize)> {
    let spans = |seqs: &[Vec<String>]| -> BTreeSet<Span> {
        let mut out = BTreeSet::new();
        for (i, s) in seqs.iter().enumerate() {
            let mut j = 0;
            while j < s.len() {
                if let Some(class) = s[j].strip_prefix("B-") {
                    let mut end = j + 1;
                    while end < s.len() && s[end].strip_prefix("I-") == Some(class) {
                        end += 1;
                    }
                    out.insert((i, class.to_string(), j, end));
                    j = end;
                } else {
                    j += 1;
                }
            }
        }
        out
    };
    let (g, p) = (spans(gold), spans(pred));
    let mut counts: BTreeMap<String, (usize, usize, usize)> = BTreeMap::new();
    for c in &g {
        counts.entry(c.1.clone()).or_default().2 += 1;
        if p.contains(c) {
            counts.get_mut(&c.1).unwrap().0 += 1;
        }
    }
    for c in &p {
        counts.entry(c.1.clone()).or_default().1 += 1;
    }
    counts
}

fn oracle_macro_f1(counts: &BTreeMap<String, (usize, usize, usize)>) -> f64 {
    if counts.is_empty() {
        return 0.0;
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let sum: f64 = counts
        .values()
        .map(|&(tp, np, ng)| {
            let (p, r) = (ratio(tp, np), ratio(tp, ng));
            if p + r == 0.0 {
                0.0
            } else {
                2.0 * p * r / (p + r)
            }
        })
        .sum();
    sum / counts.len() as f64
}

fn random_corpus(rng: &mut ChaCha8Rng, name: &str) -> LabeledCorpus {
    let sentences = (0..rng.random_range(1..=8))
        .map(|i| {
            let len = rng.random_range(1..=8);
            let tokens = random_tags(rng, len)
                .into_iter()
                .enumerate()
                .map(|(j, tag)| Token::new(format!("w{}", (i * 3 + j) % 7), tag))
                .collect();
            Sentence::new(format!("{name}{i}"), tokens)
        })
        .collect();
    LabeledCorpus::new(name, sentences).unwrap()
}

fn eval_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for case in 0..200 {
        let gold = random_corpus(&mut rng, "g");
        let pred: Vec<Vec<String>> = gold
            .sentences
            .iter()
            .map(|s| {
                let noise = random_tags(&mut rng, s.len());
                let mixed: Vec<String> = s
                    .tokens
                    .iter()
                    .zip(noise)
                    .map(|(t, n)| if rng.random_bool(0.5) { t.gold_tag.clone() } else { n })
                    .collect();
                oracle_repair(&mixed)
            })
            .collect();
        let report = evaluate(&gold, &pred).map_err(|e| e.to_string())?;
        let counts = set_scorer(&gold.gold_tags(), &pred);
        let got: BTreeMap<String, (usize, usize, usize)> = report
            .classes
            .iter()
            .map(|(k, c)| (k.clone(), (c.true_positives, c.predicted, c.support)))
            .collect();
        ensure(got == counts, || format!("case {case}: counts {got:?} vs {counts:?}"))?;
        let expected = oracle_macro_f1(&counts);
        ensure(report.macro_f1 == expected, || format!("case {case}: macro F1 {} vs {expected}", report.macro_f1))?;
    }
    let gold = LabeledCorpus::new(
        "hand",
        vec![Sentence::new(
            "h",
            vec![Token::new("Ana", "B-PER"), Token::new("visited", "O"), Token::new("Oslo", "B-LOC")],
        )],
    )
    .unwrap();
    let hand = evaluate(&gold, &[vec!["B-PER", "O", "O"]]).map_err(|e| e.to_string())?;
    ensure(hand.macro_f1 == 0.5, || format!("hand case macro F1 {}", hand.macro_f1))?;
    Ok("200 random corpora match the set-intersection scorer; hand case macro F1 0.5".into())
}

fn augmentation() -> Outcome {
    let spec = |seed| SynthSpec::new(153, &["PER", "LOC", "CW"], seed);
    let bn = synthetic_corpus("bn", &spec(1));
    let hi = synthetic_corpus("hi", &spec(2));
    let en = synthetic_corpus("en", &spec(3));
    let two = combine(&[bn.clone(), hi.clone()], "d5").map_err(|e| e.to_string())?;
    let three = combine(&[bn.clone(), hi.clone(), en.clone()], "d6").map_err(|e| e.to_string())?;
    ensure(two.len() == 306 && three.len() == 459, || format!("sizes {} and {}", two.len(), three.len()))?;
    ensure(two.token_count() == bn.token_count() + hi.token_count(), || "token counts do not add".into())?;

    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut changed = 0;
    for case in 0..100 {
        let corpus = random_corpus(&mut rng, "c");
        let mut lex = Lexicon::new("lex", "en", "bn");
        for w in 0..7 {
            if rng.random_bool(0.4) {
                lex.insert(format!("w{w}"), format!("t{w}")).unwrap();
            }
        }
        let fallback = if case % 2 == 0 { TranslateFallback::Keep } else { TranslateFallback::MarkUnknown };
        let (out, summary) = token_translate(&corpus, &mut LexiconBackend::new(lex), "en", "bn", fallback)
            .map_err(|e| e.to_string())?;
        ensure(out.len() == corpus.len(), || format!("case {case}: sentence count changed"))?;
        for (a, b) in corpus.sentences.iter().zip(&out.sentences) {
            let (ga, gb) = (a.gold_tags(), b.gold_tags());
            ensure(a.len() == b.len() && ga == gb, || format!("case {case}: tags changed in {}", a.id))?;
            ensure(extract_chunks(&ga).unwrap() == extract_chunks(&gb).unwrap(), || {
                format!("case {case}: chunks changed in {}", a.id)
            })?;
        }
        changed += summary.translated;
    }
    Ok(format!("153+153=306, 153+153+153=459; 100 translated corpora keep chunks ({changed} tokens translated)"))
}

fn nertk(dir: &Path, args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_nertk"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))?;
    Ok(out.stdout)
}

fn pipeline(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let fixtures: PathBuf = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let fx = |n: &str| fixtures.join(n).to_string_lossy().into_owned();
    let mut outputs = BTreeMap::new();
    let steps: Vec<Vec<String>> = vec![
        vec!["split".into(), fx("sample20.conll"), "--train-out".into(), "train.conll".into(), "--dev-out".into(), "dev.conll".into()],
        vec!["train".into(), "--config".into(), fx("tiny.toml"), "--train".into(), "train.conll".into(), "--dev".into(), "dev.conll".into(), "--model-out".into(), "crf.json".into()],
        vec!["train".into(), "--config".into(), fx("tiny_softmax.toml"), "--train".into(), "train.conll".into(), "--dev".into(), "dev.conll".into(), "--model-out".into(), "softmax.json".into()],
        vec!["predict".into(), "--model".into(), "crf.json".into(), "--corpus".into(), "dev.conll".into(), "--out".into(), "crf.pred".into()],
        vec!["predict".into(), "--model".into(), "softmax.json".into(), "--corpus".into(), "dev.conll".into(), "--out".into(), "softmax.pred".into()],
        vec!["ensemble".into(), "crf.pred".into(), "softmax.pred".into(), "--reference".into(), "dev.conll".into(), "--out".into(), "ens.pred".into()],
        vec!["evaluate".into(), "--gold".into(), "dev.conll".into(), "--pred".into(), "ens.pred".into(), "--baseline".into(), "crf.pred".into()],
    ];
    for (i, step) in steps.iter().enumerate() {
        let mut args = vec!["--seed", "42"];
        args.extend(step.iter().map(String::as_str));
        outputs.insert(format!("stdout.{i}.{}", step[0]), nertk(dir, &args)?);
    }
    for entry in fs::read_dir(dir).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        outputs.insert(name, fs::read(&path).map_err(|e| e.to_string())?);
    }
    Ok(outputs)
}

fn determinism() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (first, second) = (pipeline(a.path())?, pipeline(b.path())?);
    ensure(first.keys().eq(second.keys()), || "runs produced different file sets".into())?;
    for (name, bytes) in &first {
        ensure(&second[name] == bytes, || format!("{name} differs between runs"))?;
    }
    for required in ["crf.json", "softmax.json", "crf.pred", "ens.pred", "ens.pred.diagnostics", "stdout.6.evaluate"] {
        ensure(first.contains_key(required), || format!("{required} missing"))?;
    }
    Ok(format!("{} artifacts byte-identical across two seed-42 runs", first.len()))
}

fn split_arithmetic() -> Outcome {
    let mut spec = SynthSpec::new(15300, &["PER", "LOC"], 42);
    spec.max_len = 5;
    let corpus = synthetic_corpus("d1", &spec);
    let (tr, dev) = split_corpus(&corpus, 0.7, 42).map_err(|e| e.to_string())?;
    ensure((tr.len(), dev.len()) == (10710, 4590), || format!("{} / {}", tr.len(), dev.len()))?;
    let ids: BTreeSet<&String> = tr.sentences.iter().chain(&dev.sentences).map(|s| &s.id).collect();
    ensure(ids.len() == 15300, || "train and dev overlap".into())?;
    Ok("15300 -> 10710 / 4590, disjoint".into())
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("crf matches path enumeration", crf_oracle),
        ("gradient suite", gradient_suite),
        ("overfit small corpus", overfit),
        ("early stopping contract", early_stopping),
        ("ensemble voting oracle", ensemble_oracle),
        ("chunk evaluation oracle", eval_oracle),
        ("augmentation arithmetic", augmentation),
        ("end-to-end determinism", determinism),
        ("split arithmetic", split_arithmetic),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("[PASS] {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("[FAIL] {name}: {why}");
            }
        }
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
