use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use gfstop_core::dynamics::{iteration_map, steady_state};
use gfstop_core::inference::pseudo_true;
use gfstop_core::montecarlo::mc_pessimism_experiment;
use gfstop_core::sequential::{myopic_cutoff, posterior_update, History, PosteriorGrid};
use gfstop_core::stage_game::{optimal_cutoff, StageGame, TrueModel};

fn cutoffs(c: &mut Criterion) {
    let game = StageGame::search_with_recall(0.3).unwrap();
    let truth = TrueModel::standard();
    let model = truth.biased(0.0, -0.4, 0.5);
    c.bench_function("optimal_cutoff", |b| b.iter(|| optimal_cutoff(black_box(&game), &model).unwrap()));
    c.bench_function("pseudo_true", |b| b.iter(|| pseudo_true(&truth, black_box(0.3), 0.5).unwrap()));
    c.bench_function("iteration_map", |b| b.iter(|| iteration_map(black_box(-0.2), &game, &truth, 0.5).unwrap()));
    c.bench_function("steady_state", |b| b.iter(|| steady_state(&game, &truth, black_box(0.5), 1e-12, 10_000).unwrap()));
}

fn learning(c: &mut Criterion) {
    let game = StageGame::search_with_recall(0.0).unwrap();
    let grid = PosteriorGrid::flat_known_mu1(0.0, -3.0, 1.0, 401).unwrap();
    let h = History { x1: -0.3, x2: Some(0.7) };
    c.bench_function("posterior_update_401", |b| b.iter(|| posterior_update(black_box(&grid), &h, 0.5, 1.0).unwrap()));
    c.bench_function("myopic_cutoff_401", |b| b.iter(|| myopic_cutoff(black_box(&grid), &game, 0.5, 1.0).unwrap()));
}

fn monte_carlo(c: &mut Criterion) {
    let truth = TrueModel::standard();
    let mut g = c.benchmark_group("mc_pessimism");
    g.sample_size(10);
    g.bench_function("n100_reps1e4", |b| {
        b.iter(|| mc_pessimism_experiment(100, 10_000, &truth, black_box(0.0), 0.5, 1).unwrap())
    });
    g.finish();
}

criterion_group!(benches, cutoffs, learning, monte_carlo);
criterion_main!(benches);
