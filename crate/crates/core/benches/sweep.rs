use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use qubit_variance::experiments::amplitude_sweep;
use qubit_variance::hds::SamplingSpec;
use qubit_variance::ode::SolverOptions;
use qubit_variance::par::Execution;

fn amplitudes(n: usize) -> Vec<f64> {
    // geometric between 4e-3 and 1.6e-2
    (0..n).map(|i| 4e-3 * 4f64.powf(i as f64 / (n - 1) as f64)).collect()
}

fn sweep(c: &mut Criterion) {
    let opts = SolverOptions::default();
    let sampling = SamplingSpec::PerCycle(32);
    let amps = amplitudes(8);
    let mut group = c.benchmark_group("amplitude_sweep");
    group.sample_size(10);
    for (label, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
        group.bench_with_input(BenchmarkId::new(label, amps.len()), &amps, |b, amps| {
            b.iter(|| black_box(amplitude_sweep(amps, &opts, &sampling, exec)))
        });
    }
    group.finish();
}

criterion_group!(benches, sweep);
criterion_main!(benches);
