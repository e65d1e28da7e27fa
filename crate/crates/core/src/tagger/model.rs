use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{CrfMode, TaggerConfig};
use super::context::ContextualVectors;
use super::vocab::Vocab;
use super::TokenPrediction;
use crate::corpus::{repair_bio, LabeledCorpus, Sentence, TagSet};
use crate::crf::{crf_marginals, crf_nll_grad, viterbi, TransitionMatrix};
use crate::error::{ConfigProblem, Error, Result};
use crate::nn::char_cnn::CharCnnCache;
use crate::nn::lstm::BiLstmCache;
use crate::nn::matrix::{argmax, log_softmax_rows, softmax_rows};
use crate::nn::attention::AttentionCache;
use crate::nn::{dropout, BiLstm, CharCnn, DropoutMask, Embedding, Linear, Matrix, Mode, MultiHeadAttention, ParamStore, WordVectors};

const CRF_TRANSITIONS: &str = "crf.transitions";
const CRF_START: &str = "crf.start";
const CRF_END: &str = "crf.end";

#[derive(Debug, Clone, PartialEq)]
pub struct TaggerModel {
    pub config: TaggerConfig,
    pub tagset: TagSet,
    pub words: Vocab,
    pub chars: Vocab,
    pub pos: Vocab,
    /// Width of the contextual slot, 0 when disabled.
    pub contextual_dim: usize,
    pub params: ParamStore,
}

pub(crate) struct Layers {
    word: Embedding,
    chars: Option<(Embedding, CharCnn)>,
    pos: Option<Embedding>,
    encoder: BiLstm,
    mha: Option<MultiHeadAttention>,
    head: Linear,
}

impl Layers {
    pub(crate) fn new(
        config: &TaggerConfig,
        words: usize,
        chars: usize,
        pos: usize,
        contextual_dim: usize,
        tags: usize,
    ) -> Result<Self> {
        let char_layers = if config.use_char_cnn {
            Some((
                Embedding::new("char", chars, config.char_dim),
                CharCnn::new("char_cnn", config.char_dim, config.char_kernel, config.char_filters)?,
            ))
        } else {
            None
        };
        let encoder = BiLstm::new("encoder", config.input_dim(contextual_dim), config.hidden, config.lstm_layers)?;
        let mha = if config.use_mha {
            Some(MultiHeadAttention::new("mha", encoder.output_dim(), config.mha_heads)?)
        } else {
            None
        };
        Ok(Self {
            word: Embedding::new("word", words, config.word_dim),
            chars: char_layers,
            pos: config.use_pos.then(|| Embedding::new("pos", pos, config.pos_dim)),
            head: Linear::new("head", encoder.output_dim(), tags),
            encoder,
            mha,
        })
    }

    /// Fresh parameters drawn in a fixed layer order; CRF scores start at zero.
    pub(crate) fn init_params(&self, config: &TaggerConfig, tags: usize, rng: &mut ChaCha8Rng) -> ParamStore {
        let mut ps = ParamStore::new();
        self.word.init(&mut ps, rng);
        if let Some((emb, cnn)) = &self.chars {
            emb.init(&mut ps, rng);
            cnn.init(&mut ps, rng);
        }
        if let Some(pos) = &self.pos {
            pos.init(&mut ps, rng);
        }
        self.encoder.init(&mut ps, rng);
        if let Some(mha) = &self.mha {
            mha.init(&mut ps, rng);
        }
        self.head.init(&mut ps, rng);
        if config.use_crf {
            ps.insert(CRF_TRANSITIONS, Matrix::zeros(tags, tags));
            ps.insert(CRF_START, Matrix::zeros(1, tags));
            ps.insert(CRF_END, Matrix::zeros(1, tags));
        }
        ps
    }
}

struct Trace {
    word_idx: Vec<usize>,
    chars: Vec<(Vec<usize>, CharCnnCache)>,
    pos_idx: Vec<usize>,
    mask: DropoutMask,
    lstm: BiLstmCache,
    mha: Option<AttentionCache>,
    head_in: Matrix,
}

/// Builds vocabularies from `corpus` and initializes parameters under
/// `config.seed`. Word rows for tokens found in `pretrained` are copied
/// verbatim.
pub fn build_model(
    config: &TaggerConfig,
    corpus: &LabeledCorpus,
    pretrained: Option<&WordVectors>,
    contextual: Option<&ContextualVectors>,
) -> Result<TaggerModel> {
    corpus.validate()?;
    let mut problems = config.problems();
    if config.use_pos && !corpus.has_pos() {
        problems.push(ConfigProblem::new(
            "use_pos",
            format!("corpus `{}` has no POS column", corpus.name),
        ));
    }
    if config.use_contextual_slot && contextual.is_none() {
        problems.push(ConfigProblem::new("use_contextual_slot", "no contextual vector file was given"));
    }
    if let Some(v) = pretrained {
        if v.dim() != config.word_dim {
            problems.push(ConfigProblem::new(
                "word_dim",
                format!("is {} but the pretrained vectors have dimension {}", config.word_dim, v.dim()),
            ));
        }
    }
    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }

    let tokens = corpus.sentences.iter().flat_map(|s| &s.tokens);
    let words = Vocab::build(tokens.clone().map(|t| t.surface.as_str()));
    let chars = Vocab::build(tokens.clone().flat_map(|t| t.surface.chars()).map(String::from));
    let pos = Vocab::build(tokens.filter_map(|t| t.pos.as_deref()));
    let contextual_dim = match (config.use_contextual_slot, contextual) {
        (true, Some(c)) => c.dim(),
        _ => 0,
    };
    let tags = corpus.tagset.len();
    let layers = Layers::new(config, words.len(), chars.len(), pos.len(), contextual_dim, tags)?;
    let mut params = layers.init_params(config, tags, &mut ChaCha8Rng::seed_from_u64(config.seed));
    if let Some(vectors) = pretrained {
        let table = params.value_mut(&layers.word.table_name())?;
        for (i, token) in words.known().iter().enumerate() {
            if let Some(v) = vectors.get(token) {
                table.row_mut(i + 1).copy_from_slice(v);
            }
        }
    }
    Ok(TaggerModel {
        config: config.clone(),
        tagset: corpus.tagset.clone(),
        words,
        chars,
        pos,
        contextual_dim,
        params,
    })
}

/// Predictions for every sentence of `corpus`.
pub fn predict_corpus(
    model: &TaggerModel,
    corpus: &LabeledCorpus,
    contextual: Option<&ContextualVectors>,
) -> Result<Vec<Vec<TokenPrediction>>> {
    corpus
        .sentences
        .iter()
        .map(|s| model.predict(s, contextual))
        .collect()
}

impl TaggerModel {
    pub(crate) fn layers(&self) -> Result<Layers> {
        Layers::new(
            &self.config,
            self.words.len(),
            self.chars.len(),
            self.pos.len(),
            self.contextual_dim,
            self.tagset.len(),
        )
    }

    /// Transition scores used for training and decoding, including the BIO
    /// penalties when enabled.
    pub fn transitions(&self) -> Result<TransitionMatrix> {
        let tr = TransitionMatrix::new(
            self.params.get(CRF_TRANSITIONS)?.clone(),
            self.params.get(CRF_START)?.as_slice().to_vec(),
            self.params.get(CRF_END)?.as_slice().to_vec(),
        )?;
        if self.config.bio_constraints {
            tr.plus(&TransitionMatrix::bio_constraints(&self.tagset))
        } else {
            Ok(tr)
        }
    }

    fn logits(&self, layers: &Layers, sentence: &Sentence, contextual: Option<&ContextualVectors>, mode: Mode, rng: &mut ChaCha8Rng) -> Result<(Matrix, Trace)> {
        if sentence.is_empty() {
            return Err(Error::InvalidArgument(format!("sentence `{}` is empty", sentence.id)));
        }
        let ps = &self.params;
        let word_idx: Vec<usize> = sentence.tokens.iter().map(|t| self.words.get(&t.surface)).collect();
        let mut parts = vec![layers.word.forward(ps, &word_idx)?];
        if self.contextual_dim > 0 {
            let ctx = contextual.ok_or_else(|| Error::MissingContextual {
                sentence_id: sentence.id.clone(),
                token: None,
            })?;
            let m = ctx.matrix_for(sentence)?;
            if m.cols() != self.contextual_dim {
                return Err(Error::Shape(format!(
                    "contextual vectors have dimension {}, model expects {}",
                    m.cols(),
                    self.contextual_dim
                )));
            }
            parts.push(m);
        }
        let mut char_traces = Vec::new();
        if let Some((emb, cnn)) = &layers.chars {
            let mut pooled = Matrix::zeros(sentence.len(), cnn.filters);
            for (i, t) in sentence.tokens.iter().enumerate() {
                let mut idx: Vec<usize> = t.surface.chars().map(|c| self.chars.get(c.encode_utf8(&mut [0; 4]))).collect();
                if idx.is_empty() {
                    idx.push(0);
                }
                let (out, cache) = cnn.forward(ps, &emb.forward(ps, &idx)?)?;
                pooled.row_mut(i).copy_from_slice(out.as_slice());
                char_traces.push((idx, cache));
            }
            parts.push(pooled);
        }
        let mut pos_idx = Vec::new();
        if let Some(pos) = &layers.pos {
            pos_idx = sentence
                .tokens
                .iter()
                .map(|t| t.pos.as_deref().map_or(0, |p| self.pos.get(p)))
                .collect();
            parts.push(pos.forward(ps, &pos_idx)?);
        }
        let refs: Vec<&Matrix> = parts.iter().collect();
        let x = Matrix::hconcat(&refs)?;
        let (x, mask) = dropout(&x, self.config.dropout, mode, rng)?;
        let (mut h, lstm) = layers.encoder.forward(ps, &x)?;
        let mut mha_cache = None;
        if let Some(mha) = &layers.mha {
            let (y, cache) = mha.forward(ps, &h)?;
            h = y;
            mha_cache = Some(cache);
        }
        let z = layers.head.forward(ps, &h)?;
        Ok((
            z,
            Trace {
                word_idx,
                chars: char_traces,
                pos_idx,
                mask,
                lstm,
                mha: mha_cache,
                head_in: h,
            },
        ))
    }

    fn backward(&mut self, layers: &Layers, trace: &Trace, dz: &Matrix) -> Result<()> {
        let ps = &mut self.params;
        let mut d = layers.head.backward(ps, &trace.head_in, dz)?;
        if let (Some(mha), Some(cache)) = (&layers.mha, &trace.mha) {
            d = mha.backward(ps, cache, &d)?;
        }
        let d = trace.mask.backward(&layers.encoder.backward(ps, &trace.lstm, &d)?);
        let mut offset = 0;
        let wd = layers.word.dim;
        layers.word.backward(ps, &trace.word_idx, &d.columns(offset, wd))?;
        offset += wd + self.contextual_dim;
        if let Some((emb, cnn)) = &layers.chars {
            let block = d.columns(offset, cnn.filters);
            for (i, (idx, cache)) in trace.chars.iter().enumerate() {
                let d_chars = cnn.backward(ps, cache, &Matrix::row_vector(block.row(i)))?;
                emb.backward(ps, idx, &d_chars)?;
            }
            offset += cnn.filters;
        }
        if let Some(pos) = &layers.pos {
            pos.backward(ps, &trace.pos_idx, &d.columns(offset, pos.dim))?;
        }
        Ok(())
    }

    /// Per-token scores: CRF emissions when the CRF head is on, otherwise
    /// softmax probabilities whose rows sum to 1.
    pub fn forward(&self, sentence: &Sentence, contextual: Option<&ContextualVectors>, mode: Mode, rng: &mut ChaCha8Rng) -> Result<Matrix> {
        let (z, _) = self.logits(&self.layers()?, sentence, contextual, mode, rng)?;
        Ok(self.head_scores(z))
    }

    fn head_scores(&self, z: Matrix) -> Matrix {
        match (self.config.use_crf, self.config.crf_mode) {
            (false, _) => softmax_rows(&z),
            (true, CrfMode::Joint) => z,
            (true, CrfMode::DecodeOnly) => log_softmax_rows(&z),
        }
    }

    fn eval_logits(&self, layers: &Layers, sentence: &Sentence, contextual: Option<&ContextualVectors>) -> Result<Matrix> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        Ok(self.logits(layers, sentence, contextual, Mode::Eval, &mut rng)?.0)
    }

    pub fn predict(&self, sentence: &Sentence, contextual: Option<&ContextualVectors>) -> Result<Vec<TokenPrediction>> {
        let z = self.eval_logits(&self.layers()?, sentence, contextual)?;
        let scores = self.head_scores(z);
        let (indices, confidences): (Vec<usize>, Vec<f64>) = if self.config.use_crf {
            let tr = self.transitions()?;
            let (path, _) = viterbi(&scores, &tr)?;
            let marginals = crf_marginals(&scores, &tr)?;
            let conf = path.iter().enumerate().map(|(t, &j)| marginals[(t, j)].clamp(0.0, 1.0)).collect();
            (path, conf)
        } else {
            (0..scores.rows())
                .map(|t| {
                    let j = argmax(scores.row(t));
                    (j, scores[(t, j)])
                })
                .unzip()
        };
        let labels: Vec<&str> = indices
            .iter()
            .map(|&j| self.tagset.label(j).expect("head width equals tagset size"))
            .collect();
        Ok(repair_bio(&labels)
            .into_iter()
            .zip(confidences)
            .map(|(l, s)| TokenPrediction::new(l, s))
            .collect())
    }

    fn gold_indices(&self, sentence: &Sentence) -> Result<Vec<usize>> {
        sentence
            .tokens
            .iter()
            .map(|t| {
                self.tagset.index_of(&t.gold_tag).ok_or_else(|| {
                    Error::InvalidArgument(format!(
                        "sentence `{}`: label `{}` is not in the model tagset",
                        sentence.id, t.gold_tag
                    ))
                })
            })
            .collect()
    }

    /// Loss on one sentence, with `dz` and transition gradients when requested.
    fn sentence_loss(&self, z: &Matrix, gold: &[usize]) -> Result<(f64, Matrix, Option<TransitionMatrix>)> {
        let cross_entropy = |z: &Matrix| {
            let n = z.rows() as f64;
            let lsm = log_softmax_rows(z);
            let loss = -gold.iter().enumerate().map(|(t, &g)| lsm[(t, g)]).sum::<f64>() / n;
            let mut dz = softmax_rows(z);
            for (t, &g) in gold.iter().enumerate() {
                dz[(t, g)] -= 1.0;
            }
            dz.scale(1.0 / n);
            (loss, dz, lsm)
        };
        match (self.config.use_crf, self.config.crf_mode) {
            (false, _) => {
                let (loss, dz, _) = cross_entropy(z);
                Ok((loss, dz, None))
            }
            (true, CrfMode::Joint) => {
                let g = crf_nll_grad(z, &self.transitions()?, gold)?;
                Ok((g.loss, g.d_emissions, Some(g.d_transitions)))
            }
            (true, CrfMode::DecodeOnly) => {
                let (ce, dz, lsm) = cross_entropy(z);
                let g = crf_nll_grad(&lsm, &self.transitions()?, gold)?;
                Ok((ce + g.loss, dz, Some(g.d_transitions)))
            }
        }
    }

    /// Training-mode loss of one sentence; gradients are added to the store.
    pub(crate) fn accumulate(&mut self, sentence: &Sentence, contextual: Option<&ContextualVectors>, rng: &mut ChaCha8Rng) -> Result<f64> {
        let gold = self.gold_indices(sentence)?;
        let layers = self.layers()?;
        let (z, trace) = self.logits(&layers, sentence, contextual, Mode::Train, rng)?;
        let (loss, dz, d_trans) = self.sentence_loss(&z, &gold)?;
        if !loss.is_finite() {
            return Ok(loss);
        }
        self.backward(&layers, &trace, &dz)?;
        if let Some(d) = d_trans {
            self.params.accumulate(CRF_TRANSITIONS, &d.scores)?;
            self.params.accumulate(CRF_START, &Matrix::row_vector(&d.start))?;
            self.params.accumulate(CRF_END, &Matrix::row_vector(&d.end))?;
        }
        Ok(loss)
    }

    /// Evaluation-mode loss of one sentence.
    pub fn loss(&self, sentence: &Sentence, contextual: Option<&ContextualVectors>) -> Result<f64> {
        let gold = self.gold_indices(sentence)?;
        let z = self.eval_logits(&self.layers()?, sentence, contextual)?;
        Ok(self.sentence_loss(&z, &gold)?.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Token;
    use crate::crf::{log_partition, path_score};

    fn corpus() -> LabeledCorpus {
        let s = |id: &str, words: &[(&str, &str)]| {
            Sentence::new(id, words.iter().map(|(w, t)| Token::new(*w, *t).with_pos("X")).collect())
        };
        LabeledCorpus::new(
            "toy",
            vec![
                s("a", &[("ana", "B-PER"), ("went", "O"), ("to", "O"), ("dhaka", "B-LOC")]),
                s("b", &[("new", "B-LOC"), ("york", "I-LOC"), ("is", "O"), ("big", "O")]),
            ],
        )
        .unwrap()
    }

    fn full_config() -> TaggerConfig {
        TaggerConfig {
            use_char_cnn: true,
            use_mha: true,
            use_pos: true,
            hidden: 4,
            word_dim: 4,
            char_dim: 3,
            char_filters: 3,
            pos_dim: 2,
            lstm_layers: 1,
            ..TaggerConfig::default()
        }
    }

    #[test]
    fn vocab_and_determinism() {
        let c = corpus();
        let a = build_model(&full_config(), &c, None, None).unwrap();
        let b = build_model(&full_config(), &c, None, None).unwrap();
        assert_eq!(a.words.len(), 9);
        assert_eq!(a.params, b.params);
        assert_eq!(a.params.get("head.weight").unwrap().cols(), a.tagset.len());
    }

    #[test]
    fn pretrained_rows_are_copied() {
        let c = corpus();
        let mut v = WordVectors::new(4);
        v.insert("dhaka", vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        v.insert("absent", vec![9.0; 4]).unwrap();
        let m = build_model(&full_config(), &c, Some(&v), None).unwrap();
        let table = m.params.get("word.table").unwrap();
        assert_eq!(table.row(m.words.get("dhaka")), &[1.0, 2.0, 3.0, 4.0]);
        let wrong = WordVectors::new(5);
        match build_model(&full_config(), &c, Some(&wrong), None) {
            Err(Error::Config(p)) => assert_eq!(p[0].key, "word_dim"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn use_pos_requires_pos_column() {
        let mut c = corpus();
        for s in &mut c.sentences {
            for t in &mut s.tokens {
                t.pos = None;
            }
        }
        match build_model(&full_config(), &c, None, None) {
            Err(Error::Config(p)) => assert!(p.iter().any(|p| p.key == "use_pos")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn softmax_rows_sum_to_one_and_predict() {
        let c = corpus();
        let config = TaggerConfig {
            use_crf: false,
            ..full_config()
        };
        let m = build_model(&config, &c, None, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = m.forward(&c.sentences[0], None, Mode::Eval, &mut rng).unwrap();
        for r in 0..p.rows() {
            assert!((p.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        let again = m.forward(&c.sentences[0], None, Mode::Eval, &mut rng).unwrap();
        assert_eq!(p, again);
        let preds = m.predict(&c.sentences[0], None).unwrap();
        assert_eq!(preds.len(), 4);
        for pr in &preds {
            assert!(pr.score >= 1.0 / m.tagset.len() as f64 && pr.score <= 1.0);
        }
    }

    #[test]
    fn crf_scores_match_enumerated_marginals() {
        let c = corpus();
        let mut m = build_model(&full_config(), &c, None, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for name in [CRF_TRANSITIONS, CRF_START, CRF_END] {
            let shape = m.params.get(name).unwrap().shape();
            *m.params.value_mut(name).unwrap() = Matrix::uniform(shape.0, shape.1, 1.0, &mut rng);
        }
        let s = &c.sentences[1];
        let e = m.forward(s, None, Mode::Eval, &mut rng).unwrap();
        let tr = m.transitions().unwrap();
        let log_z = log_partition(&e, &tr).unwrap();
        let preds = m.predict(s, None).unwrap();
        let (path, _) = viterbi(&e, &tr).unwrap();
        let tags = e.cols();
        let n = e.rows();
        for (pos, &tag) in path.iter().enumerate() {
            // brute-force marginal of `tag` at `pos`
            let mut total = 0.0;
            let mut p = vec![0usize; n];
            loop {
                if p[pos] == tag {
                    total += (path_score(&e, &tr, &p).unwrap() - log_z).exp();
                }
                let mut k = 0;
                while k < n {
                    p[k] += 1;
                    if p[k] < tags {
                        break;
                    }
                    p[k] = 0;
                    k += 1;
                }
                if k == n {
                    break;
                }
            }
            assert!((preds[pos].score - total).abs() < 1e-9);
        }
    }

    #[test]
    fn empty_sentence_and_missing_context() {
        let c = corpus();
        let m = build_model(&full_config(), &c, None, None).unwrap();
        assert!(m.predict(&Sentence::new("e", vec![]), None).is_err());
        let config = TaggerConfig {
            use_contextual_slot: true,
            ..full_config()
        };
        let mut ctx = ContextualVectors::new(2);
        for (i, _) in c.sentences[0].tokens.iter().enumerate() {
            ctx.insert("a", i, vec![0.1, 0.2]).unwrap();
        }
        let m = build_model(&config, &c, None, Some(&ctx)).unwrap();
        assert_eq!(m.contextual_dim, 2);
        m.predict(&c.sentences[0], Some(&ctx)).unwrap();
        match m.predict(&c.sentences[1], Some(&ctx)) {
            Err(Error::MissingContextual { sentence_id, .. }) => assert_eq!(sentence_id, "b"),
            other => panic!("{other:?}"),
        }
        assert!(build_model(&config, &c, None, None).is_err());
    }
}
