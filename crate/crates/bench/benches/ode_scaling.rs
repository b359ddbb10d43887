use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use impdiff::methods::Method;
use impdiff_bench::linear_ode;

// Adjoint cost should stay roughly flat in the input dimension while
// forward sensitivity grows linearly with it.
fn scaling(c: &mut Criterion) {
    let mut g = c.benchmark_group("ode-linear-nd");
    g.sample_size(10);
    for input_dim in [1usize, 10, 100] {
        let f = linear_ode(10, input_dim);
        for m in [Method::Adjoint, Method::ForwardSens] {
            g.bench_with_input(BenchmarkId::new(m.name(), input_dim), &input_dim, |b, _| {
                b.iter(|| black_box(f.run(m)))
            });
        }
    }
    g.finish();
}

criterion_group!(benches, scaling);
criterion_main!(benches);
