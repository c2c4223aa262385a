use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use randschro::harness::run_ensemble;
use randschro::limitlaw::{sample_critical_limit, CriticalConfig};
use randschro::medium::MediumSpec;
use randschro::par::Execution;
use randschro::randfield::{empirical_covariance, physical_medium, GridSpec, Lag};
use randschro::solver::{InitialPacket, RealizationPlan, StepRule};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn plan() -> RealizationPlan {
    RealizationPlan::new(
        MediumSpec::medium_a(),
        0.2,
        8.0 / 3.0,
        GridSpec::new(1, 1024, 12.0 * std::f64::consts::PI).unwrap(),
        InitialPacket::gaussian(1.0, vec![0.0], 1.0),
        vec![vec![1.0]],
        vec![0.5, 1.0],
        7,
        StepRule::default(),
    )
    .unwrap()
}

fn ensemble(c: &mut Criterion) {
    let plan = plan();
    let mut g = c.benchmark_group("ensemble_32");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| run_ensemble(black_box(&plan), 32, exec).unwrap())
        });
    }
    g.finish();
}

fn critical_sampler(c: &mut Criterion) {
    let spec = MediumSpec::medium_a();
    let packet = InitialPacket::gaussian(1.0, vec![0.0], 1.0);
    let mut g = c.benchmark_group("critical_limit_200");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| sample_critical_limit(&spec, &packet, 1.0, 1.0, CriticalConfig::default(), 200, 3, exec).unwrap())
        });
    }
    g.finish();
}

fn covariance(c: &mut Criterion) {
    let grid = GridSpec::new(1, 1024, 200.0).unwrap();
    let medium = Arc::new(physical_medium(&MediumSpec::medium_a(), grid).unwrap());
    let lags = vec![Lag { t: 0.0, x: vec![0.0] }, Lag { t: 1.0, x: vec![0.0] }];
    let mut g = c.benchmark_group("field_covariance_200");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| empirical_covariance(medium.clone(), 200, &lags, 5, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, ensemble, critical_sampler, covariance);
criterion_main!(benches);
