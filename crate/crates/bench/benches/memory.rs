//! Memory-pool operations at steady state: every tier filled to its
//! capacity (8 short, 8 long, 3 permanent) with dimension-64 cue tokens.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use dualtrack_bench::{bench_rng, full_pool, random_token};
use dualtrack_core::memory::attn_update;

const DIM: usize = 64;
const RATIO: usize = 4;

fn bench_attn_update(c: &mut Criterion) {
    let mut rng = bench_rng();
    let pool = full_pool(DIM, RATIO, &mut rng);
    let source = pool.short().clone();
    c.bench_function("attn_update 8 tokens from 8 tokens", |b| {
        b.iter(|| {
            let mut target = pool.long().clone();
            attn_update(&mut target, black_box(&source)).unwrap();
            black_box(target)
        })
    });
}

fn bench_retrieve(c: &mut Criterion) {
    let mut rng = bench_rng();
    let pool = full_pool(DIM, RATIO, &mut rng);
    let query = random_token(DIM, &mut rng);
    c.bench_function("retrieve from full pool", |b| {
        b.iter(|| black_box(pool.retrieve(black_box(&query)).unwrap()))
    });
}

fn bench_filter(c: &mut Criterion) {
    let mut rng = bench_rng();
    let pool = full_pool(DIM, RATIO, &mut rng);
    let cue = random_token(DIM, &mut rng);
    c.bench_function("bottleneck filter 64 -> 16 -> 64", |b| {
        b.iter(|| black_box(pool.filter(black_box(&cue)).unwrap()))
    });
}

fn bench_update(c: &mut Criterion) {
    let mut rng = bench_rng();
    let pool = full_pool(DIM, RATIO, &mut rng);
    let cue = random_token(DIM, &mut rng);
    // Every update at the default unit strides refines both deeper tiers,
    // so this measures the worst-case per-frame maintenance cost.
    c.bench_function("pool update with tier refinement", |b| {
        b.iter(|| {
            let mut p = pool.clone();
            p.update(black_box(&cue)).unwrap();
            black_box(p)
        })
    });
}

criterion_group!(
    memory,
    bench_attn_update,
    bench_retrieve,
    bench_filter,
    bench_update,
);
criterion_main!(memory);
