//! Match and collection throughput, single worker against the rayon pool.
//!
//! Build with `--no-default-features` to measure the sequential fallback only.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use locm_core::agents::AgentSpec;
use locm_core::cardgen::registry;
use locm_core::dataset::collect;
use locm_core::eval::{run_matches, MatchPlan};
use locm_core::par::effective_workers;

const MATCHES: u64 = 64;

// At least two chunks so the rayon path runs even on a single core.
fn worker_counts() -> Vec<usize> {
    vec![1, effective_workers(0).max(2)]
}

fn matches(c: &mut Criterion) {
    let reg = registry(32).unwrap();
    let mut g = c.benchmark_group("greedy_vs_random");
    g.throughput(Throughput::Elements(MATCHES));
    g.sample_size(10);
    for w in worker_counts() {
        let plan = MatchPlan { registry: &reg, seed: 1, drafter: None, workers: w };
        g.bench_with_input(BenchmarkId::new("workers", w), &plan, |b, plan| {
            b.iter(|| run_matches(&AgentSpec::Greedy, &AgentSpec::Random, MATCHES, plan).unwrap())
        });
    }
    g.finish();
}

fn collection(c: &mut Criterion) {
    let reg = registry(32).unwrap();
    let mut g = c.benchmark_group("collect_greedy");
    g.throughput(Throughput::Elements(MATCHES));
    g.sample_size(10);
    for w in worker_counts() {
        g.bench_with_input(BenchmarkId::new("workers", w), &w, |b, &w| {
            b.iter(|| collect(&AgentSpec::Greedy, MATCHES, 1, &reg, w).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, matches, collection);
criterion_main!(benches);
