use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use wg_stokes::assembly::{assemble, solve_with};
use wg_stokes::verification::solution_s1;
use wg_stokes::weakops::{LocalOperators, OperatorCache};
use wg_stokes::{MeshFamily, SolverKind};

/// Local operator construction on one cell of each shape.
fn local_operators(c: &mut Criterion) {
    let mut group = c.benchmark_group("local_operators");
    for family in [MeshFamily::Triangles, MeshFamily::NonconvexL] {
        let mesh = family.build(4).unwrap();
        for k in [1, 2] {
            group.bench_function(BenchmarkId::new(family.tag(), format!("k{k}")), |b| {
                b.iter(|| LocalOperators::for_cell(black_box(&mesh), 0, k).unwrap())
            });
        }
    }
    group.finish();
}

fn assemble_and_solve(c: &mut Criterion) {
    let exact = solution_s1();
    let mut group = c.benchmark_group("assemble_solve");
    group.sample_size(10);
    for (family, n) in [(MeshFamily::Triangles, 16), (MeshFamily::NonconvexL, 8)] {
        let mesh = family.build(n).unwrap();
        let cache = OperatorCache::new(1);
        let id = format!("{}_n{n}", family.tag());
        group.bench_function(BenchmarkId::new("assemble", &id), |b| {
            b.iter(|| assemble(black_box(&mesh), 1, &exact, &cache).unwrap())
        });
        let system = assemble(&mesh, 1, &exact, &cache).unwrap();
        for solver in [SolverKind::Direct, SolverKind::Minres] {
            group.bench_function(BenchmarkId::new(format!("solve_{solver:?}").to_lowercase(), &id), |b| {
                b.iter(|| solve_with(black_box(&system), solver).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, local_operators, assemble_and_solve);
criterion_main!(benches);
