use criterion::{black_box, criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use esscore::features::{kl_divergence, word_distribution};
use esscore::metrics::qwk;
use esscore::model::{backward, forward, CellType, Example, ModelConfig, Parameters};
use esscore::textprep::{build_vocab, tokenize, TokenSequence};

fn bench_qwk(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let predicted: Vec<i64> = (0..1500).map(|_| rng.gen_range(0..=60)).collect();
    let actual: Vec<i64> = (0..1500).map(|_| rng.gen_range(0..=60)).collect();
    c.bench_function("qwk_1500x61", |b| {
        b.iter(|| qwk(black_box(&predicted), black_box(&actual), 0, 60).unwrap())
    });
}

fn bench_tokenize(c: &mut Criterion) {
    let text = "Dear @CAPS1, I can't believe the computer couldn't read it. \
                People shouldn't worry; they'll manage. "
        .repeat(20);
    c.bench_function("tokenize_2k_chars", |b| {
        b.iter(|| tokenize(1, black_box(&text)))
    });
}

fn bench_kl(c: &mut Criterion) {
    let words: Vec<String> = (0..2000).map(|i| format!("w{i}")).collect();
    let refs: Vec<&str> = words.iter().map(String::as_str).collect();
    let sequences = vec![TokenSequence {
        essay_id: 0,
        tokens: refs.iter().map(|w| w.to_string()).collect(),
    }];
    let vocab = build_vocab(&sequences, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let draw = |rng: &mut ChaCha8Rng| TokenSequence {
        essay_id: 0,
        tokens: (0..300)
            .map(|_| refs[rng.gen_range(0..refs.len())].to_string())
            .collect(),
    };
    let p = word_distribution(&draw(&mut rng), &vocab, 0.01).unwrap();
    let q = word_distribution(&draw(&mut rng), &vocab, 0.01).unwrap();
    c.bench_function("kl_2k_vocab", |b| {
        b.iter(|| kl_divergence(black_box(&p), black_box(&q)).unwrap())
    });
}

fn paper_scale_config(cell_type: CellType) -> (ModelConfig, Parameters, Vec<usize>) {
    let mut config = ModelConfig::new(cell_type, 4000, 250.0);
    config.cell_size = 300;
    config.embed_dim = 100;
    config.seed = 3;
    let params = Parameters::init(&config).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let tokens: Vec<usize> = (0..250).map(|_| rng.gen_range(1..4000)).collect();
    (config, params, tokens)
}

fn bench_forward(c: &mut Criterion) {
    for cell_type in [CellType::Gru, CellType::Lstm] {
        let (config, params, tokens) = paper_scale_config(cell_type);
        c.bench_function(&format!("forward_{cell_type}_cell300_seq250"), |b| {
            b.iter(|| forward(black_box(&tokens), None, &params, &config).unwrap())
        });
    }
}

fn bench_backward(c: &mut Criterion) {
    let (config, params, tokens) = paper_scale_config(CellType::Gru);
    let batch = vec![Example {
        tokens,
        content: None,
        target: 0.7,
    }];
    c.bench_function("backward_gru_cell300_seq250", |b| {
        b.iter(|| backward(black_box(&batch), &params, &config).unwrap())
    });
}

criterion_group!(
    benches,
    bench_qwk,
    bench_tokenize,
    bench_kl,
    bench_forward,
    bench_backward
);
criterion_main!(benches);
