//! Sequential versus rayon-parallel execution of independent drops.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use coexsim::config::{RunConfig, RunKind};
use coexsim::engine::run_drops_sequential;

fn bench_config(drops: usize) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.coexistence.mode = RunKind::Adaptive;
    cfg.lte.arrival_rate = 1.0;
    cfg.engine.duration_ms = 5_000;
    cfg.engine.drops = drops;
    cfg
}

fn drops(c: &mut Criterion) {
    let mut group = c.benchmark_group("drops");
    group.sample_size(10);
    for n in [4usize, 16] {
        let cfg = bench_config(n);
        group.bench_with_input(BenchmarkId::new("sequential", n), &cfg, |b, cfg| {
            b.iter(|| run_drops_sequential(cfg).unwrap())
        });
        #[cfg(feature = "parallel")]
        group.bench_with_input(BenchmarkId::new("parallel", n), &cfg, |b, cfg| {
            b.iter(|| coexsim::engine::run_drops_parallel(cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, drops);
criterion_main!(benches);
