use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use rtvae_bench::{bench_layout, mixed_batch};
use rtvae_core::divergences::{total_loss, Beta};
use rtvae_core::model::{init_params, Architecture};
use rtvae_core::numerics::{Rng, Tape};
use rtvae_core::trainer::{adam_step, AdamState, TrainConfig};

fn bench_forward_backward(c: &mut Criterion) {
    let arch = Architecture::defaults(bench_layout());
    let params = init_params(&arch, &mut Rng::new(1)).unwrap();
    let mut group = c.benchmark_group("loss_forward_backward");
    for batch_size in [64usize, 256] {
        let batch = mixed_batch(batch_size, 7);
        for (name, beta) in [("beta0", Beta::ZERO), ("beta0.1", Beta::new(0.1).unwrap())] {
            group.bench_with_input(BenchmarkId::new(name, batch_size), &batch, |b, batch| {
                b.iter(|| {
                    let mut rng = Rng::new(3);
                    let mut tape = Tape::new();
                    let graph = total_loss(&params, batch, beta, &mut rng, &mut tape).unwrap();
                    tape.backward(graph.total).unwrap();
                    black_box(graph.breakdown.total)
                });
            });
        }
    }
    group.finish();
}

fn bench_adam_epoch(c: &mut Criterion) {
    let arch = Architecture::defaults(bench_layout());
    let batch = mixed_batch(256, 9);
    c.bench_function("train_step_default_arch", |b| {
        let mut params = init_params(&arch, &mut Rng::new(1)).unwrap();
        let mut adam = AdamState::new(&params);
        let config = TrainConfig::new(arch.clone(), 1);
        let mut rng = Rng::new(5);
        b.iter(|| {
            let mut tape = Tape::new();
            let graph = total_loss(&params, &batch, config.beta, &mut rng, &mut tape).unwrap();
            tape.backward(graph.total).unwrap();
            let grads = graph.binding.gradients(&tape);
            adam_step(&mut params, &grads, &mut adam, &config);
            black_box(graph.breakdown.total)
        });
    });
}

criterion_group!(benches, bench_forward_backward, bench_adam_epoch);
criterion_main!(benches);
