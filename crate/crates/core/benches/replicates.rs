use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use sweepsim::engine::{run_conditioned_map, BatchOptions, SimOptions};
use sweepsim::model::{EcoParams, Geometry};
use sweepsim::par::Execution;

fn params(k: u64) -> EcoParams {
    let ln_k = (k as f64).ln();
    let mut p = EcoParams::reference(0.2 / ln_k, 0.3 / ln_k, Geometry::Adjacent);
    p.capacity = k;
    p
}

fn conditioned_batch(c: &mut Criterion) {
    let mut group = c.benchmark_group("conditioned_batch");
    group.sample_size(10);
    let p = params(200);
    for (name, execution) in [
        ("sequential", Execution::Sequential),
        ("parallel", Execution::Parallel),
    ] {
        let opts = BatchOptions {
            sim: SimOptions::default(),
            max_attempts: None,
            execution,
        };
        group.bench_with_input(BenchmarkId::new(name, 64), &opts, |b, opts| {
            b.iter(|| {
                run_conditioned_map(&p, 64, 7, opts, |o| o.event_count)
                    .items
                    .len()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, conditioned_batch);
criterion_main!(benches);
