use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use paloma_bench::{mult_true, pow2_inputs};
use paloma_core::oracle::OracleOptions;
use paloma_core::protocols::{id_assign_known_n, mult_protocol, pow2_protocol};
use paloma_core::tapecalc::{multiply, write_counter};
use paloma_core::{
    check_stable_computation, run, CounterRegion, InputAssignment, RunOptions, BLANK,
};

fn simulation(c: &mut Criterion) {
    let mut g = c.benchmark_group("run");
    let p = mult_protocol();
    for m in [2usize, 4, 8] {
        let a = mult_true(m);
        let opts = RunOptions::new(1, p.layout_hint);
        g.bench_with_input(BenchmarkId::new("mult", a.len()), &a, |b, a| {
            b.iter(|| run(&p, a, &opts).unwrap())
        });
    }
    let ids = id_assign_known_n();
    for n in [4usize, 8] {
        let a = InputAssignment::new(vec![paloma_core::protocols::ids::size_input(n); n]);
        let opts = RunOptions::new(1, ids.layout_hint);
        g.bench_with_input(BenchmarkId::new("ids", n), &a, |b, a| {
            b.iter(|| run(&ids, a, &opts).unwrap())
        });
    }
    g.finish();
}

fn oracle(c: &mut Criterion) {
    let mut g = c.benchmark_group("oracle");
    g.sample_size(10);
    let p = pow2_protocol();
    for k in [2usize, 3, 4] {
        let a = pow2_inputs(k);
        let expected = vec![if k.is_power_of_two() { "1" } else { "0" }.to_string(); a.len()];
        let opts = OracleOptions::new(p.layout_hint);
        g.bench_with_input(BenchmarkId::new("pow2", a.len()), &a, |b, a| {
            b.iter(|| check_stable_computation(&p, a, &expected, &opts).unwrap())
        });
    }
    g.finish();
}

fn tapecalc(c: &mut Criterion) {
    let x = CounterRegion::new(0, 16);
    let y = CounterRegion::new(16, 16);
    let out = CounterRegion::new(32, 32);
    let mut tape = vec![BLANK; 64];
    write_counter(&mut tape, &x, 40_503).unwrap();
    write_counter(&mut tape, &y, 61_337).unwrap();
    c.bench_function("tapecalc/multiply16", |b| {
        b.iter(|| multiply(black_box(&mut tape), &x, &y, &out).unwrap())
    });
}

criterion_group!(benches, simulation, oracle, tapecalc);
criterion_main!(benches);
