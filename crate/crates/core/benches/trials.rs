use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use cliquehit::factor::{clique_factor, DEFAULT_NODE_BUDGET};
use cliquehit::par::{map_indexed, map_indexed_seq};
use cliquehit::process::{hitting_time_clique_cover, standard_process};
use cliquehit::seed::trial_seed;

fn factor_trial(n: u32, i: usize) -> bool {
    let trace = standard_process(n, 2, trial_seed(1, i as u64)).unwrap();
    let t = hitting_time_clique_cover(&trace, 3).unwrap().unwrap();
    clique_factor(&trace.prefix(t), 3, DEFAULT_NODE_BUDGET)
        .unwrap()
        .is_found()
}

fn trials(c: &mut Criterion) {
    let mut group = c.benchmark_group("factor_trials");
    group.sample_size(10);
    for n in [18u32, 30] {
        let count = 64;
        group.bench_with_input(BenchmarkId::new("sequential", n), &n, |b, &n| {
            b.iter(|| map_indexed_seq(count, |i| factor_trial(n, i)))
        });
        group.bench_with_input(BenchmarkId::new("parallel", n), &n, |b, &n| {
            b.iter(|| map_indexed(count, None, |i| factor_trial(n, i)))
        });
    }
    group.finish();
}

criterion_group!(benches, trials);
criterion_main!(benches);
