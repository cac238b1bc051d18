use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use rnnlab_bench::fixture;
use rnnlab_core::dynamics::{self, analysis_spec, SettleConfig};
use rnnlab_core::train_sl::batch_grad;
use rnnlab_core::{Context, TaskKind};

fn step(c: &mut Criterion) {
    let mut g = c.benchmark_group("rnn_step");
    for n in [64, 250] {
        let (p, trials) = fixture(n, 1);
        let h = vec![0.1; n];
        let x = trials[0].inputs[10];
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| p.step(black_box(&h), black_box(&x)))
        });
    }
    g.finish();
}

fn sl_batch_gradient(c: &mut Criterion) {
    let (p, trials) = fixture(64, 64);
    c.bench_function("bptt_ce_batch64_n64", |b| {
        b.iter(|| batch_grad(black_box(&p), black_box(&trials)).unwrap())
    });
}

fn settle_point(c: &mut Criterion) {
    let (p, _) = fixture(64, 1);
    let cfg = SettleConfig::default();
    let spec = analysis_spec(TaskKind::CtxDm, Context::A, 0.1, -0.2);
    c.bench_function("settle_and_classify_n64", |b| {
        b.iter(|| dynamics::analyze_point(black_box(&p), &spec, &cfg))
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = step, sl_batch_gradient, settle_point
}
criterion_main!(benches);
