use std::hint::black_box;

use bellkit::bounds::two_term_bound_optimized;
use bellkit::conjecture::{conjecture1_estimate, ConjectureMode};
use bellkit::events::{pair_by_lattice, pair_by_window};
use bellkit::polytope::{local_mixture_weights, quantum_behavior};
use bellkit::quantum::canonical_angles;
use bellkit::{observed_correlations, RngSeed};
use bellkit_bench::{jittered_stream, lhv_table, quantum_runs};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

fn chsh(c: &mut Criterion) {
    let mut g = c.benchmark_group("observed_correlations");
    for n in [800usize, 15_000, 400_000] {
        let runs = quantum_runs(n);
        g.throughput(Throughput::Elements(n as u64));
        g.bench_with_input(BenchmarkId::from_parameter(n), &runs, |b, r| {
            b.iter(|| observed_correlations(black_box(r)).unwrap())
        });
    }
    g.finish();
}

fn conjecture(c: &mut Criterion) {
    let mut g = c.benchmark_group("conjecture");
    let t8 = lhv_table(8);
    g.bench_function("exhaustive_n8", |b| {
        b.iter(|| {
            conjecture1_estimate(black_box(&t8), ConjectureMode::exhaustive(), RngSeed(0)).unwrap()
        })
    });
    let t100 = lhv_table(100);
    g.bench_function("monte_carlo_n100_10k", |b| {
        b.iter(|| {
            conjecture1_estimate(
                black_box(&t100),
                ConjectureMode::MonteCarlo { trials: 10_000 },
                RngSeed(1),
            )
            .unwrap()
        })
    });
    g.finish();
}

fn pairing(c: &mut Criterion) {
    let mut g = c.benchmark_group("pairing");
    let stream = jittered_stream(100_000);
    g.throughput(Throughput::Elements(stream.len() as u64));
    g.bench_function("window", |b| {
        b.iter(|| pair_by_window(black_box(&stream), 300).unwrap())
    });
    g.bench_function("lattice", |b| {
        b.iter(|| pair_by_lattice(black_box(&stream), 1000, 0).unwrap())
    });
    g.finish();
}

fn bounds(c: &mut Criterion) {
    c.bench_function("two_term_optimized", |b| {
        b.iter(|| two_term_bound_optimized(black_box(15_000), black_box(0.73)).unwrap())
    });
}

fn polytope(c: &mut Criterion) {
    let q = quantum_behavior(&canonical_angles());
    c.bench_function("local_mixture_weights_quantum", |b| {
        b.iter(|| local_mixture_weights(black_box(&q)))
    });
}

criterion_group!(benches, chsh, conjecture, pairing, bounds, polytope);
criterion_main!(benches);
