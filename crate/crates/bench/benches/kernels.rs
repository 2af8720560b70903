use std::hint::black_box;

use capflow_bench::half_clifford_problem;
use capflow_core::conformal::{moebius_apply, FlowSpec, MoebiusMap, SpherePoint};
use capflow_core::functionals::{energy, monotonicity_trace, TraceOptions};
use capflow_core::spectral::{index_count, robin_spectrum};
use capflow_core::surface::builtin::half_clifford_torus;
use capflow_core::surface::mesh_parametric;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DVector;

fn assembly(c: &mut Criterion) {
    let s = half_clifford_torus();
    let mut g = c.benchmark_group("assembly");
    for h in [0.1, 0.05] {
        g.bench_with_input(BenchmarkId::new("mesh", h), &h, |b, &h| b.iter(|| mesh_parametric(&s, h).unwrap()));
        let problem = half_clifford_problem(h);
        g.bench_with_input(BenchmarkId::new("assemble", h), &problem, |b, p| b.iter(|| p.assemble().unwrap()));
    }
    g.finish();
}

fn eigen(c: &mut Criterion) {
    let mut g = c.benchmark_group("eigen");
    g.sample_size(10);
    for h in [0.1, 0.05] {
        let form = half_clifford_problem(h).assemble().unwrap();
        g.bench_with_input(BenchmarkId::new("robin_8", h), &form, |b, f| b.iter(|| robin_spectrum(f, 8).unwrap()));
        g.bench_with_input(BenchmarkId::new("index_count", h), &form, |b, f| b.iter(|| index_count(f).unwrap()));
    }
    g.finish();
}

fn flow(c: &mut Criterion) {
    let mut g = c.benchmark_group("flow");
    let map = MoebiusMap::translation(DVector::from_vec(vec![0.1, 0.3, -0.2, 0.05])).unwrap();
    let x = SpherePoint::from_slice(&[0.5, 0.5, 0.5, 0.5]).unwrap();
    g.bench_function("moebius_apply", |b| b.iter(|| moebius_apply(&map, black_box(&x)).unwrap()));
    let s = half_clifford_torus();
    g.bench_function("energy", |b| b.iter(|| energy(black_box(&s)).unwrap()));
    g.sample_size(10);
    let spec = FlowSpec::from_slice(&[0.0, 1.0, 0.0, 0.0]).unwrap();
    let times: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
    g.bench_function("trace_11_steps", |b| {
        b.iter(|| monotonicity_trace(&s, &spec, &times, &TraceOptions::default()).unwrap())
    });
    g.finish();
}

criterion_group!(benches, assembly, eigen, flow);
criterion_main!(benches);
