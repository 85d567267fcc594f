// Rayon pool against the sequential path on the two hot loops: the
// per-frequency resolvent solve and per-frequency time stepping.

use std::f64::consts::PI;
use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use degenop::multiplier::ModeOperators;
use degenop::par;
use degenop::semigroup::{evolve, uniform_times, Forcing, Scheme};
use degenop::{make_grid, Complex64 as C, Field, ModelParams, XBox};

fn setup(nx: usize, j: usize) -> (ModeOperators, Field) {
    let m = ModelParams::new(vec![0.3, 0.2], 0.5, 1.0, 0.0, 2.0).unwrap();
    let g = Arc::new(make_grid(j, 4.0, 4.0 / 3.0, Some(XBox { length: 2.0 * PI, nx, dim: 2 })).unwrap());
    let ops = ModeOperators::model(&m, g.clone()).unwrap();
    let f = Field::from_fn(g, |x, y| C::new((x[0]).cos() * (2.0 * x[1]).sin() * (-y * y).exp(), y * (-y).exp()));
    (ops, f)
}

fn modes(c: &mut Criterion) {
    let (ops, f) = setup(16, 512);
    let mut group = c.benchmark_group("resolvent_solve");
    for (label, serial) in [("parallel", false), ("serial", true)] {
        par::set_serial(serial);
        group.bench_function(BenchmarkId::from_parameter(label), |b| {
            b.iter(|| ops.solve(C::new(1.0, 0.5), black_box(&f)).unwrap())
        });
    }
    group.finish();

    let times = uniform_times(0.5, 32);
    let mut group = c.benchmark_group("crank_nicolson");
    for (label, serial) in [("parallel", false), ("serial", true)] {
        par::set_serial(serial);
        group.bench_function(BenchmarkId::from_parameter(label), |b| {
            b.iter(|| evolve(black_box(&f), &Forcing::None, &ops, Scheme::CrankNicolson, &times, |_| false).unwrap())
        });
    }
    group.finish();
    par::set_serial(false);
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = modes
}
criterion_main!(benches);
