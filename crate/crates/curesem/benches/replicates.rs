//! Parallel vs. sequential Monte Carlo replicate loops.
//!
//! `run_mc_study` fans replicates out over rayon when the `parallel`
//! feature is on (the default); `run_mc_study_seq` always runs them in
//! order. The two are byte-for-byte identical in output, so this bench
//! measures nothing but the replicate map itself. The study is kept
//! deliberately small — the point is the dispatch overhead and scaling,
//! not the statistics.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use curesem::em::EmConfig;
use curesem::ew::EwParams;
use curesem::inference::Engine;
use curesem::simgen::{run_mc_study, run_mc_study_seq, standard_design, SimDesign};

fn small_design(replicates: usize) -> SimDesign {
    let ew = EwParams::new(2.0, 1.0, 1.5).expect("valid shapes and scale");
    standard_design(100, false, ew, replicates, 42)
}

fn bench_replicates(c: &mut Criterion) {
    let engine = Engine::Em(EmConfig::default());
    let mut group = c.benchmark_group("mc_replicates");
    group.sample_size(10);
    for replicates in [4usize, 16] {
        let design = small_design(replicates);
        group.bench_with_input(
            BenchmarkId::new("parallel", replicates),
            &design,
            |b, design| b.iter(|| run_mc_study(design, &engine).expect("study runs")),
        );
        group.bench_with_input(
            BenchmarkId::new("sequential", replicates),
            &design,
            |b, design| b.iter(|| run_mc_study_seq(design, &engine).expect("study runs")),
        );
    }
    group.finish();
}

criterion_group!(benches, bench_replicates);
criterion_main!(benches);
