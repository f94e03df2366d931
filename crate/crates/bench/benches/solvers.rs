use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hopf_cl::amplitude::AmplitudeSolver;
use hopf_cl::rd_solver::{RdStepper, SolverOptions};
use hopf_cl::spectral::derivative;
use hopf_cl_bench::{amplitude_fixture, smooth_field, toy_fixture};

fn fft_derivative(c: &mut Criterion) {
    let mut group = c.benchmark_group("derivative");
    for n in [256, 1024, 4096] {
        let f = smooth_field(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &f, |b, f| b.iter(|| derivative(f, 2)));
    }
    group.finish();
}

fn rd_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("rd_step");
    for n in [256, 1024] {
        let (model, g, st) = toy_fixture(n);
        let mut stepper = RdStepper::new(&model, &g, 0.01, SolverOptions::default()).unwrap();
        stepper.load(&st).unwrap();
        group.bench_function(BenchmarkId::from_parameter(n), |b| b.iter(|| stepper.advance().unwrap()));
    }
    group.finish();
}

fn amplitude_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("amplitude_step");
    for n in [64, 256] {
        let (p, s) = amplitude_fixture(n);
        let mut solver = AmplitudeSolver::new(p, s.grid(), 0.01).unwrap();
        solver.load(&s).unwrap();
        group.bench_function(BenchmarkId::from_parameter(n), |b| b.iter(|| solver.advance().unwrap()));
    }
    group.finish();
}

criterion_group!(benches, fft_derivative, rd_step, amplitude_step);
criterion_main!(benches);
