use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wristkey_bench::values;
use wristkey_core::nn::{Network, Topology};

fn forward_and_gradient(c: &mut Criterion) {
    let mut target = vec![0.0; 12];
    target[3] = 1.0;
    let mut group = c.benchmark_group("network");
    for (spec, input_len) in [
        ("fnn-sigmoid:48-128-12", 48),
        ("fnn-tanh:300-128-12", 300),
        ("rnn-lstm:6-128-12", 300),
        ("rnn-lstm-peephole:6-128-12", 300),
    ] {
        let topology: Topology = spec.parse().unwrap();
        let net = Network::random(topology, &mut ChaCha8Rng::seed_from_u64(1));
        let x = values(input_len, 2);
        group.bench_with_input(BenchmarkId::new("forward", spec), &x, |b, x| {
            b.iter(|| net.forward(black_box(x)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("gradient", spec), &x, |b, x| {
            b.iter(|| net.gradient(black_box(x), &target).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, forward_and_gradient);
criterion_main!(benches);
