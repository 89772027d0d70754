use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};
use perihom::cell::effective_assembly;
use perihom::operator::{assemble_b0, assemble_beps};
use perihom::SpectralFn;
use perihom_bench::Fixture;

fn cell_solve(c: &mut Criterion) {
    let mut g = c.benchmark_group("cell_solve");
    for name in ["two_phase_1d", "zero_corrector_2d"] {
        let problem = perihom::benchmarks::load(name).unwrap();
        g.bench_function(name, |b| b.iter(|| effective_assembly(black_box(&problem)).unwrap()));
    }
    g.finish();
}

fn fiber_assembly(c: &mut Criterion) {
    let mut g = c.benchmark_group("fiber_assembly");
    g.sample_size(20);
    for (name, n) in [("two_phase_1d", 32), ("zero_corrector_2d", 8)] {
        let fx = Fixture::new(name, n);
        g.bench_function(format!("b_eps/{name}/N{n}"), |b| {
            b.iter(|| assemble_beps(&fx.problem, fx.lambda, fx.layout.clone()).unwrap())
        });
        g.bench_function(format!("b0/{name}/N{n}"), |b| {
            b.iter(|| assemble_b0(fx.cell.clone(), &fx.problem.symbol, fx.lambda, fx.layout.clone()).unwrap())
        });
    }
    g.finish();
}

fn func_calc(c: &mut Criterion) {
    let mut g = c.benchmark_group("func_calc");
    g.sample_size(20);
    let fx = Fixture::new("two_phase_1d", 32);
    let u = fx.datum(1);
    // Fresh operator per sample so the per-fiber eigendecompositions are included.
    g.bench_function("cos_sqrt/cold", |b| {
        b.iter_batched(
            || assemble_beps(&fx.problem, fx.lambda, fx.layout.clone()).unwrap(),
            |op| op.func_calc(SpectralFn::CosSqrt(1.0), &u).unwrap(),
            BatchSize::SmallInput,
        )
    });
    let op = assemble_beps(&fx.problem, fx.lambda, fx.layout.clone()).unwrap();
    op.func_calc(SpectralFn::Inv, &u).unwrap();
    g.bench_function("cos_sqrt/warm", |b| b.iter(|| op.func_calc(SpectralFn::CosSqrt(black_box(1.0)), &u).unwrap()));
    g.finish();
}

criterion_group!(benches, cell_solve, fiber_assembly, func_calc);
criterion_main!(benches);
