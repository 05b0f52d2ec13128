use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use permgibbs_core::potential::Potential;
use permgibbs_core::regime::{r0, weight_sum_check};

fn constants(c: &mut Criterion) {
    c.bench_function("r0", |b| b.iter(|| r0(black_box(1e-10)).unwrap()));
    for dim in 1..=3 {
        let v = Potential::Quadratic { dim };
        c.bench_function(&format!("varphi d={dim}"), |b| {
            b.iter(|| v.varphi(black_box(1.0), 1e-9).unwrap())
        });
    }
    c.bench_function("weight_sum d=2 m=3", |b| {
        b.iter(|| weight_sum_check(black_box(1.0), 3, 2, 20).unwrap())
    });
}

criterion_group!(benches, constants);
criterion_main!(benches);
