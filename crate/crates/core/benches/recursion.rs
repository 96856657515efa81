//! Batch evaluation of `r` through the data-parallel path and a plain loop.
//!
//! Build with `--no-default-features` to see the sequential fallback of the
//! `par` path; with the default features it runs on the rayon pool.

use bolic::metric::MetricContext;
use bolic::{par, GroupElement, GroupModel};
use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn targets(model: &GroupModel, n: usize) -> Vec<GroupElement> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    (0..n).map(|i| model.random_element_of_length(&mut rng, 18 + (i % 8) as u32).unwrap()).collect()
}

fn fresh() -> MetricContext {
    MetricContext::new(GroupModel::free(2, 1).unwrap()).unwrap()
}

fn batch_r(c: &mut Criterion) {
    let ctx = fresh();
    let one = ctx.model().identity();
    let batch = targets(ctx.model(), 32);
    let mut group = c.benchmark_group("r batch F2 |b| 18..25");
    group.sample_size(10);
    // every iteration starts from an empty memo table
    group.bench_function("par path", |bench| {
        bench.iter_batched(
            fresh,
            |ctx| par::map_slice(&batch, |b| ctx.r_value(&one, b).unwrap()),
            BatchSize::PerIteration,
        )
    });
    group.bench_function("sequential loop", |bench| {
        bench.iter_batched(
            fresh,
            |ctx| batch.iter().map(|b| ctx.r_value(&one, b).unwrap()).collect::<Vec<_>>(),
            BatchSize::PerIteration,
        )
    });
    group.finish();
}

criterion_group!(benches, batch_r);
criterion_main!(benches);
