use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nertk::crf::{crf_nll_grad, log_partition, viterbi, TransitionMatrix};
use nertk::ensemble::{majority_vote, VoteConfig};
use nertk::eval::evaluate;
use nertk::nn::{BiLstm, Matrix, ParamStore};
use nertk::synth::{synthetic_corpus, SynthSpec};
use nertk::tagger::TokenPrediction;

// 6 entity classes in BIO give 13 tags.
const TAGS: usize = 13;

fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::uniform(rows, cols, 1.0, rng)
}

fn crf(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let trans = TransitionMatrix::new(random(TAGS, TAGS, &mut rng), vec![0.1; TAGS], vec![0.0; TAGS]).unwrap();
    let mut group = c.benchmark_group("crf");
    for len in [10, 40] {
        let e = random(len, TAGS, &mut rng);
        let gold: Vec<usize> = (0..len).map(|i| i % TAGS).collect();
        group.bench_with_input(BenchmarkId::new("log_partition", len), &e, |b, e| {
            b.iter(|| log_partition(black_box(e), &trans).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("viterbi", len), &e, |b, e| b.iter(|| viterbi(black_box(e), &trans).unwrap()));
        group.bench_with_input(BenchmarkId::new("nll_grad", len), &e, |b, e| {
            b.iter(|| crf_nll_grad(black_box(e), &trans, &gold).unwrap())
        });
    }
    group.finish();
}

fn bilstm(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let lstm = BiLstm::new("enc", 32, 32, 2).unwrap();
    let mut ps = ParamStore::new();
    lstm.init(&mut ps, &mut rng);
    let x = random(20, 32, &mut rng);
    let d_out = random(20, lstm.output_dim(), &mut rng);
    let mut group = c.benchmark_group("bilstm");
    group.bench_function("forward", |b| b.iter(|| lstm.forward(&ps, black_box(&x)).unwrap()));
    group.bench_function("forward_backward", |b| {
        b.iter(|| {
            let (_, cache) = lstm.forward(&ps, black_box(&x)).unwrap();
            lstm.backward(&mut ps, &cache, &d_out).unwrap()
        })
    });
    group.finish();
}

fn vote(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let labels = ["O", "B-PER", "I-PER", "B-LOC", "B-CW"];
    let votes: Vec<TokenPrediction> = (0..8)
        .map(|_| TokenPrediction::new(labels[rng.random_range(0..labels.len())], rng.random_range(0.0..1.0)))
        .collect();
    let config = VoteConfig::default();
    c.bench_function("majority_vote/8_models", |b| b.iter(|| majority_vote(black_box(&votes), &config).unwrap()));
}

fn eval(c: &mut Criterion) {
    let classes = ["PER", "LOC", "GRP", "CORP", "PROD", "CW"];
    let gold = synthetic_corpus("gold", &SynthSpec::new(800, &classes, 4));
    let pred = synthetic_corpus("pred", &SynthSpec::new(800, &classes, 4)).gold_tags();
    c.bench_function("evaluate/800_sentences", |b| b.iter(|| evaluate(black_box(&gold), &pred).unwrap()));
}

criterion_group!(benches, crf, bilstm, vote, eval);
criterion_main!(benches);
