//! Deterministic synthetic corpora for tests, benchmarks and demos.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{LabeledCorpus, Sentence, Token};

const FILLER_POS: [&str; 4] = ["DT", "VB", "NN", "IN"];

/// Shape of a generated corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub sentences: usize,
    pub classes: Vec<String>,
    pub min_len: usize,
    pub max_len: usize,
    /// Distinct surface forms per class and for filler words.
    pub words_per_class: usize,
    pub fillers: usize,
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(sentences: usize, classes: &[&str], seed: u64) -> Self {
        Self {
            sentences,
            classes: classes.iter().map(|c| c.to_string()).collect(),
            min_len: 4,
            max_len: 10,
            words_per_class: 6,
            fillers: 20,
            seed,
        }
    }
}

/// Sentences mix filler words with 1–3 token mentions. Entity words are
/// drawn from a per-class lexicon (`per0`, `per1`, ... for class `PER`);
/// every token carries a POS tag.
pub fn synthetic_corpus(name: &str, spec: &SynthSpec) -> LabeledCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let max_len = spec.max_len.max(spec.min_len).max(1);
    let min_len = spec.min_len.clamp(1, max_len);
    let sentences = (0..spec.sentences)
        .map(|i| {
            let len = rng.random_range(min_len..=max_len);
            let mut tokens = Vec::with_capacity(len);
            while tokens.len() < len {
                let room = len - tokens.len();
                if !spec.classes.is_empty() && rng.random_bool(0.35) {
                    let class = &spec.classes[rng.random_range(0..spec.classes.len())];
                    let span = rng.random_range(1..=3).min(room);
                    let stem = class.to_lowercase();
                    for k in 0..span {
                        let word = format!("{stem}{}", rng.random_range(0..spec.words_per_class.max(1)));
                        let tag = if k == 0 { format!("B-{class}") } else { format!("I-{class}") };
                        tokens.push(Token::new(word, tag).with_pos("NNP"));
                    }
                } else {
                    let w = rng.random_range(0..spec.fillers.max(1));
                    tokens.push(Token::new(format!("w{w}"), "O").with_pos(FILLER_POS[w % FILLER_POS.len()]));
                }
            }
            Sentence::new(format!("{name}-{}", i + 1), tokens)
        })
        .collect();
    LabeledCorpus::new(name, sentences).expect("generated corpus is valid")
}
