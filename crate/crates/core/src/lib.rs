//! Sequence-labeling toolkit for named entity recognition.
//!
//! The crate covers the full pipeline: CoNLL corpora with BIO tags, a
//! configurable BiLSTM tagger with optional character CNN, attention and CRF
//! layers, threshold-gated majority voting over several models, corpus
//! augmentation, and exact-span chunk scoring.
//!
//! ```
//! use nertk::{evaluate, parse_conll, ColumnConfig};
//!
//! let gold = parse_conll("Ana B-PER\nran O\n", ColumnConfig::default(), "gold").unwrap();
//! let report = evaluate(&gold, &[vec!["B-PER", "O"]]).unwrap();
//! assert_eq!(report.macro_f1, 1.0);
//! ```

pub mod augment;
pub mod corpus;
pub mod crf;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod gradsuite;
pub mod nn;
pub mod synth;
pub mod tagger;

pub use augment::{combine, run_plan, token_translate, AugmentPlan, Lexicon, LexiconBackend, TranslateFallback, TranslatorBackend};
pub use corpus::{
    corpus_stats, extract_chunks, parse_conll, repair_bio, split_corpus, validate_bio, write_conll, Chunk, ColumnConfig,
    LabeledCorpus, Sentence, StatsReport, TagSet, Token,
};
pub use crf::{crf_marginals, crf_nll_grad, log_partition, viterbi, TransitionMatrix};
pub use ensemble::{ensemble_corpus, majority_vote, PredictionSet, VoteConfig};
pub use error::{Error, Result};
pub use eval::{compare_reports, evaluate, EvalReport};
pub use nn::{Matrix, ParamStore};
pub use tagger::{build_model, load_model, save_model, train, TaggerConfig, TaggerModel, TokenPrediction, TrainHistory};
