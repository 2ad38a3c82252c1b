use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use corefed::audit::{find_blocking_coalition, UtilityMatrix};
use corefed::data::gen_synthetic_classification;
use corefed::federation::{aggregate, local_update};
use corefed::solver::project_simplex;
use corefed::utility::nash_gradient;
use corefed::{AgentProfile, Aggregator, ModelSpec, RoundConfig, UtilityConfig};
use ndarray::Array2;

fn agents(n_agents: usize, dim: usize) -> (ModelSpec, Vec<AgentProfile>) {
    let spec = ModelSpec::logreg(dim, 1.0);
    let agents = (0..n_agents)
        .map(|i| {
            let d = gen_synthetic_classification(200, dim, 2, 1.5, i as u64).unwrap().to_signed_binary();
            AgentProfile::new(i, d, 10.0)
        })
        .collect();
    (spec, agents)
}

fn bench_nash_gradient(c: &mut Criterion) {
    let mut g = c.benchmark_group("nash_gradient");
    for dim in [5, 20, 100] {
        let (spec, agents) = agents(5, dim);
        let theta = spec.zero_predictor();
        let cfg = UtilityConfig::default();
        g.bench_with_input(BenchmarkId::from_parameter(dim), &dim, |b, _| {
            b.iter(|| nash_gradient(&spec, black_box(&theta), &agents, &cfg, false).unwrap())
        });
    }
    g.finish();
}

fn bench_aggregate(c: &mut Criterion) {
    let (spec, agents) = agents(10, 20);
    let theta = spec.zero_predictor();
    let mut g = c.benchmark_group("aggregate");
    for agg in [Aggregator::FedAvg, Aggregator::CoreFed, Aggregator::WeightedCoreFed] {
        let cfg = RoundConfig::new(agg, 1, 0.1, agents.len());
        let updates: Vec<_> = agents.iter().map(|a| local_update(a, &spec, &theta, &cfg, 0).unwrap()).collect();
        g.bench_function(agg.name(), |b| {
            b.iter(|| aggregate(black_box(&theta), &updates, &agents, agg, &cfg.utility).unwrap())
        });
    }
    g.finish();
}

fn bench_blocking_search(c: &mut Criterion) {
    let mut g = c.benchmark_group("blocking_search");
    for n in [4, 8, 12] {
        // every candidate loses to the reference, so the search is exhaustive
        let m = UtilityMatrix::new(Array2::from_shape_fn((n, 5), |(i, j)| {
            if j == 0 {
                2.0
            } else {
                1.0 + 0.1 * ((i + j) % 3) as f64
            }
        }))
        .unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| find_blocking_coalition(black_box(&m), 0).unwrap())
        });
    }
    g.finish();
}

fn bench_simplex_projection(c: &mut Criterion) {
    let mut g = c.benchmark_group("simplex_projection");
    for n in [10, 1000, 100_000] {
        let v: Vec<f64> = (0..n).map(|i| ((i * 7919) % 1000) as f64 / 500.0 - 1.0).collect();
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| b.iter(|| project_simplex(black_box(&v))));
    }
    g.finish();
}

criterion_group!(benches, bench_nash_gradient, bench_aggregate, bench_blocking_search, bench_simplex_projection);
criterion_main!(benches);
