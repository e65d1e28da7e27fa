use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use nertk::augment::{run_plan_files, AugmentPlan};
use nertk::corpus::{corpus_stats, parse_conll, split_corpus, write_conll, ColumnConfig, LabeledCorpus};
use nertk::ensemble::{
    ensemble_corpus, render_diagnostics, write_predictions, Fallback, MajorityBasis, PredictionSet, VoteConfig,
    DEFAULT_THRESHOLD,
};
use nertk::error::{read_to_string, write_file, Error, Result};
use nertk::eval::{compare_reports, evaluate};
use nertk::gradsuite::{render_report, run_suite, Component};
use nertk::nn::WordVectors;
use nertk::tagger::{build_model, load_model, predict_corpus, save_model, train_with, ContextualVectors, TaggerConfig};

/// Seed used when `--seed` is not given.
const DEFAULT_SEED: u64 = 42;

#[derive(Parser)]
#[command(name = "nertk", version, about = "Sequence labeling for named entity recognition")]
struct Cli {
    /// Seed for every random choice (splits, initialization, shuffling).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CorpusArgs {
    /// The corpus has no gold-tag column.
    #[arg(long)]
    unlabeled: bool,
    /// 0-based column holding POS tags.
    #[arg(long)]
    pos_column: Option<usize>,
}

impl CorpusArgs {
    fn columns(&self) -> ColumnConfig {
        let base = if self.unlabeled {
            ColumnConfig::unlabeled()
        } else {
            ColumnConfig::default()
        };
        match self.pos_column {
            Some(c) => base.with_pos(c),
            None => base,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FallbackArg {
    HighestTotalScore,
    Outside,
}

#[derive(Clone, Copy, ValueEnum)]
enum MajorityArg {
    AllModels,
    SurvivingVotes,
}

#[derive(Subcommand)]
enum Command {
    /// Sentence, token and chunk counts of a corpus.
    Stats {
        corpus: PathBuf,
        #[command(flatten)]
        columns: CorpusArgs,
    },
    /// Shuffle and split a corpus into train and dev parts.
    Split {
        corpus: PathBuf,
        #[arg(long, default_value_t = 0.7)]
        fraction: f64,
        #[arg(long)]
        train_out: PathBuf,
        #[arg(long)]
        dev_out: PathBuf,
        #[command(flatten)]
        columns: CorpusArgs,
    },
    /// Build an augmented corpus from a TOML plan.
    Augment {
        #[arg(long)]
        plan: PathBuf,
        /// Output corpus; overrides the plan's `output_path`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Step log; defaults to `<out>.manifest`.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Train a tagger and write the best-epoch model.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        train: PathBuf,
        /// Dev corpus; without it the training file is split by `--split-fraction`.
        #[arg(long)]
        dev: Option<PathBuf>,
        #[arg(long, default_value_t = 0.7)]
        split_fraction: f64,
        #[arg(long)]
        model_out: PathBuf,
        /// Per-epoch log; defaults to `<model-out>.history`.
        #[arg(long)]
        history_out: Option<PathBuf>,
        /// Pretrained word vectors (`token v1 ... vd` per line).
        #[arg(long)]
        vectors: Option<PathBuf>,
        /// Per-token contextual vectors for the train and dev sentences.
        #[arg(long)]
        contextual: Option<PathBuf>,
        #[arg(long)]
        pos_column: Option<usize>,
    },
    /// Tag a corpus with a trained model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        contextual: Option<PathBuf>,
        #[command(flatten)]
        columns: CorpusArgs,
    },
    /// Majority-vote several prediction files.
    Ensemble {
        /// Prediction files, one per model (at least two).
        #[arg(required = true, num_args = 2..)]
        predictions: Vec<PathBuf>,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Votes scoring at or below this are discarded [default: 0.5].
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long, value_enum, default_value = "highest-total-score")]
        fallback: FallbackArg,
        #[arg(long, value_enum, default_value = "all-models")]
        majority: MajorityArg,
        /// Per-token vote log; defaults to `<out>.diagnostics`.
        #[arg(long)]
        diagnostics: Option<PathBuf>,
        #[command(flatten)]
        columns: CorpusArgs,
    },
    /// Chunk-level precision, recall and F1 of a prediction file.
    Evaluate {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        /// Second prediction file; prints the per-metric change from it to `--pred`.
        #[arg(long)]
        baseline: Option<PathBuf>,
        #[arg(long)]
        pos_column: Option<usize>,
    },
    /// Finite-difference gradient checks of every enabled layer.
    Gradcheck {
        /// Tagger config selecting the layers; all layers when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        /// Corrupt analytic gradients by 10% to confirm the checker fails.
        #[arg(long)]
        inject_fault: bool,
    },
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn load_corpus(path: &Path, columns: ColumnConfig) -> Result<LabeledCorpus> {
    let mut corpus = parse_conll(&read_to_string(path)?, columns, &path.display().to_string())?;
    if let Some(stem) = path.file_stem() {
        corpus.name = stem.to_string_lossy().into_owned();
    }
    Ok(corpus)
}

/// Model ids are file names so sidecars do not depend on the working directory.
fn load_predictions(path: &Path) -> Result<PredictionSet> {
    let id = path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
    PredictionSet::parse(&read_to_string(path)?, &id)
}

fn load_contextual(path: Option<&PathBuf>) -> Result<Option<ContextualVectors>> {
    path.map(|p| ContextualVectors::parse(&read_to_string(p)?, &p.display().to_string()))
        .transpose()
}

fn run(cli: Cli) -> Result<String> {
    let seed = cli.seed.unwrap_or(DEFAULT_SEED);
    let verbose = cli.verbose;
    let mut out = String::new();
    match cli.command {
        Command::Stats { corpus, columns } => {
            out = corpus_stats(&load_corpus(&corpus, columns.columns())?).render_table();
        }
        Command::Split {
            corpus,
            fraction,
            train_out,
            dev_out,
            columns,
        } => {
            let c = load_corpus(&corpus, columns.columns())?;
            let (train, dev) = split_corpus(&c, fraction, seed)?;
            write_file(&train_out, write_conll(&train, None)?)?;
            write_file(&dev_out, write_conll(&dev, None)?)?;
            writeln!(out, "train={} dev={} seed={seed}", train.len(), dev.len()).unwrap();
        }
        Command::Augment { plan, out: out_path, manifest } => {
            let plan = AugmentPlan::load(&plan)?;
            let target = out_path
                .or_else(|| plan.output_path.clone())
                .ok_or_else(|| Error::InvalidArgument("no output path: pass --out or set output_path".into()))?;
            let (corpus, log) = run_plan_files(&plan)?;
            write_file(&target, write_conll(&corpus, None)?)?;
            let manifest = manifest.unwrap_or_else(|| with_suffix(&target, ".manifest"));
            let mut text = log.render();
            for p in &corpus.provenance {
                writeln!(text, "provenance: {p}").unwrap();
            }
            write_file(&manifest, &text)?;
            writeln!(out, "{}: {} sentences", corpus.name, corpus.len()).unwrap();
        }
        Command::Train {
            config,
            train,
            dev,
            split_fraction,
            model_out,
            history_out,
            vectors,
            contextual,
            pos_column,
        } => {
            let mut config = TaggerConfig::parse(&read_to_string(&config)?)?;
            if let Some(s) = cli.seed {
                config.seed = s;
            }
            let columns = CorpusArgs {
                unlabeled: false,
                pos_column,
            }
            .columns();
            let (mut train, dev) = match dev {
                Some(d) => (load_corpus(&train, columns)?, load_corpus(&d, columns)?),
                None => split_corpus(&load_corpus(&train, columns)?, split_fraction, seed)?,
            };
            train.tagset = train.tagset.union(&dev.tagset);
            let vectors = vectors
                .map(|p| WordVectors::parse(&read_to_string(&p)?, &p.display().to_string()))
                .transpose()?;
            let contextual = load_contextual(contextual.as_ref())?;
            let model = build_model(&config, &train, vectors.as_ref(), contextual.as_ref())?;
            let (model, history) = train_with(model, &train, &dev, contextual.as_ref(), |r| {
                if verbose {
                    eprintln!(
                        "epoch {:>3}  train_loss {:.4}  eval_loss {:.4}  eval_macro_f1 {:.4}",
                        r.epoch, r.train_loss, r.eval_loss, r.eval_macro_f1
                    );
                }
            })?;
            save_model(&model, &model_out)?;
            write_file(
                history_out.unwrap_or_else(|| with_suffix(&model_out, ".history")),
                history.render_log(),
            )?;
            let best = &history.epochs[history.best_epoch - 1];
            writeln!(
                out,
                "stopped_epoch={} best_epoch={} eval_loss={} eval_macro_f1={}",
                history.stopped_epoch, history.best_epoch, best.eval_loss, best.eval_macro_f1
            )
            .unwrap();
        }
        Command::Predict {
            model,
            corpus,
            out: out_path,
            contextual,
            columns,
        } => {
            let model = load_model(&model)?;
            let corpus = load_corpus(&corpus, columns.columns())?;
            if model.config.use_pos && !corpus.has_pos() {
                return Err(Error::InvalidArgument(
                    "the model uses POS features; pass --pos-column".into(),
                ));
            }
            let contextual = load_contextual(contextual.as_ref())?;
            let preds = predict_corpus(&model, &corpus, contextual.as_ref())?;
            write_file(&out_path, write_predictions(&corpus, &preds)?)?;
            writeln!(out, "tagged {} sentences", corpus.len()).unwrap();
        }
        Command::Ensemble {
            predictions,
            reference,
            out: out_path,
            threshold,
            fallback,
            majority,
            diagnostics,
            columns,
        } => {
            let reference = load_corpus(&reference, columns.columns())?;
            let sets = predictions.iter().map(|p| load_predictions(p)).collect::<Result<Vec<_>>>()?;
            let config = VoteConfig {
                score_threshold: threshold.unwrap_or(DEFAULT_THRESHOLD),
                fallback: match fallback {
                    FallbackArg::HighestTotalScore => Fallback::HighestTotalScore,
                    FallbackArg::Outside => Fallback::Outside,
                },
                majority: match majority {
                    MajorityArg::AllModels => MajorityBasis::AllModels,
                    MajorityArg::SurvivingVotes => MajorityBasis::SurvivingVotes,
                },
            };
            let result = ensemble_corpus(&sets, &reference, &config)?;
            write_file(&out_path, write_predictions(&reference, &result.predictions)?)?;
            let ids: Vec<String> = sets.iter().map(|s| s.model_id.clone()).collect();
            write_file(
                diagnostics.unwrap_or_else(|| with_suffix(&out_path, ".diagnostics")),
                render_diagnostics(&result, &reference, &ids, &config, threshold.is_none()),
            )?;
            writeln!(
                out,
                "models={} sentences={} fallback_activations={}",
                sets.len(),
                reference.len(),
                result.fallback_count()
            )
            .unwrap();
        }
        Command::Evaluate {
            gold,
            pred,
            baseline,
            pos_column,
        } => {
            let columns = CorpusArgs {
                unlabeled: false,
                pos_column,
            }
            .columns();
            let gold = load_corpus(&gold, columns)?;
            let score = |path: &Path| -> Result<_> {
                let set = load_predictions(path)?;
                set.check_aligned(&gold)?;
                evaluate(&gold, &set.labels())
            };
            let report = score(&pred)?;
            out.push_str(&report.render_table());
            out.push('\n');
            out.push_str(&report.render_kv());
            if let Some(b) = baseline {
                let base = score(&b)?;
                out.push('\n');
                out.push_str(&compare_reports(&base, &report)?.render_table());
            }
        }
        Command::Gradcheck {
            config,
            seeds,
            inject_fault,
        } => {
            let components = match config {
                Some(p) => Component::enabled_by(&TaggerConfig::parse(&read_to_string(&p)?)?),
                None => Component::ALL.to_vec(),
            };
            let checks = run_suite(&components, seed..seed + seeds, inject_fault)?;
            out = render_report(&checks);
            if let Some(bad) = checks.iter().find(|c| !c.passed()) {
                print!("{out}");
                return Err(Error::InvalidArgument(format!(
                    "gradient check failed for {} (seed {}, max relative error {:e})",
                    bad.component,
                    bad.seed,
                    bad.max_rel_err()
                )));
            }
        }
    }
    Ok(out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
