use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use walkerlab_core::exec::{map_indexed, map_sequential};
use walkerlab_core::gait::{run_flat, sample_initial_states};
use walkerlab_core::mfpt::{episode_rng, sample_slope};
use walkerlab_core::sim::{StepOutcome, Walker};
use walkerlab_core::{BodyParams, ControlGains, ModelKind, SectionState};

fn walker() -> Walker {
    let gains = ControlGains { hip_p: 20.0, ..ControlGains::baseline() };
    Walker::new(ModelKind::HeadStabilized, BodyParams::baseline(), gains)
}

/// Flat runs from a box of initial states, as in a limit-cycle search.
fn cycle_search(c: &mut Criterion) {
    let w = walker();
    let starts = sample_initial_states(w.model, &SectionState::reference(w.model), 0.05, 16, 0);
    let run = |i: usize| {
        let s = w.state_from_section(&starts[i]).unwrap();
        run_flat(&w, &s, 20, 20).completed
    };
    let mut group = c.benchmark_group("cycle_search_16x20");
    group.sample_size(10);
    group.bench_function(BenchmarkId::new("map", "parallel"), |b| b.iter(|| map_indexed(starts.len(), run)));
    group.bench_function(BenchmarkId::new("map", "sequential"), |b| b.iter(|| map_sequential(starts.len(), run)));
    group.finish();
}

/// Short textured-ground walks with independent RNG streams.
fn textured_episodes(c: &mut Criterion) {
    let w = walker();
    let start = w.state_from_section(&SectionState::reference(w.model)).unwrap();
    let episode = |i: usize| {
        let mut rng = episode_rng(0, i as u64);
        let mut s = start;
        for n in 0..10 {
            match w.simulate_step(&s, sample_slope(&mut rng, 0.01)) {
                Ok(StepOutcome::Completed(next)) => s = next,
                _ => return n,
            }
        }
        10
    };
    let mut group = c.benchmark_group("episodes_32x10");
    group.sample_size(10);
    group.bench_function(BenchmarkId::new("map", "parallel"), |b| b.iter(|| map_indexed(32, episode)));
    group.bench_function(BenchmarkId::new("map", "sequential"), |b| b.iter(|| map_sequential(32, episode)));
    group.finish();
}

criterion_group!(benches, cycle_search, textured_episodes);
criterion_main!(benches);
