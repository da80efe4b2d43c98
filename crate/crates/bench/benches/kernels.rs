use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use hilight_bench::fixture;
use hilight_core::losses::hilcl_loss;
use hilight_core::model::{backward_into, encode, Dropout};
use hilight_core::train::{model_dims, train};
use hilight_core::{LclSpace, ModelParams, NegativeIndex, NegativeMode, ScheduleConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn negative_index(c: &mut Criterion) {
    let mut g = c.benchmark_group("negative_index");
    for branching in [vec![3, 3, 3], vec![4, 4, 4, 3]] {
        let f = fixture(&branching, 8);
        let name = format!("build_{}_labels", f.taxonomy.num_labels());
        g.bench_function(name, |b| {
            b.iter(|| NegativeIndex::build(black_box(&f.taxonomy), NegativeMode::LocalHard).unwrap())
        });
    }
    let f = fixture(&[4, 4, 4, 3], 64);
    let index = NegativeIndex::build(&f.taxonomy, NegativeMode::LocalHard).unwrap();
    g.bench_function("hard_negatives_per_doc", |b| {
        b.iter(|| {
            for d in &f.train {
                for y in d.labels.iter() {
                    black_box(index.hard_negatives(y, &d.labels, 0).unwrap());
                }
            }
        })
    });
    g.finish();
}

fn hilcl(c: &mut Criterion) {
    let f = fixture(&[4, 4, 4, 3], 64);
    let index = NegativeIndex::build(&f.taxonomy, NegativeMode::LocalHard).unwrap();
    let sched = ScheduleConfig::default();
    let n = f.taxonomy.num_labels();
    let logits: Vec<f64> = (0..n).map(|i| ((i * 37 % 11) as f64 - 5.0) / 3.0).collect();
    c.bench_function("hilcl_loss_64_docs", |b| {
        b.iter(|| {
            for d in &f.train {
                black_box(
                    hilcl_loss(&logits, &d.labels, 100, &sched, &index, &f.taxonomy, LclSpace::Logit, 0).unwrap(),
                );
            }
        })
    });
}

fn encode_backward(c: &mut Criterion) {
    let f = fixture(&[3, 3, 3], 64);
    let dims = model_dims(&f.config, &f.taxonomy, f.vocab.len());
    let params = ModelParams::init(dims, &mut ChaCha8Rng::seed_from_u64(1));
    let doc = &f.train[0];
    let mut g = c.benchmark_group("model");
    g.bench_function("encode_eval", |b| {
        b.iter(|| encode::<ChaCha8Rng>(&params, black_box(&doc.token_ids), None).unwrap())
    });
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let trace = encode(&params, &doc.token_ids, Some(Dropout { rate: 0.1, rng: &mut rng })).unwrap();
    let grad: Vec<f64> = trace.probabilities.iter().map(|p| p - 0.5).collect();
    g.bench_function("backward", |b| {
        b.iter_batched_ref(
            || params.zeros_like(),
            |grads| backward_into(&trace, &grad, &params, 1.0, grads).unwrap(),
            BatchSize::LargeInput,
        )
    });
    g.finish();
}

fn epoch(c: &mut Criterion) {
    let f = fixture(&[3, 3, 3], 400);
    let mut g = c.benchmark_group("training");
    g.sample_size(10);
    g.bench_function("one_epoch_400_docs", |b| {
        b.iter(|| train(&f.train, &f.dev, &f.taxonomy, f.vocab.len(), &f.config).unwrap())
    });
    g.finish();
}

criterion_group!(benches, negative_index, hilcl, encode_backward, epoch);
criterion_main!(benches);
