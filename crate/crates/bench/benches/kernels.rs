use anneal_ipm::boltzmann::moments;
use anneal_ipm::ipm::{follow_path, FollowOptions, LogBarrier};
use anneal_ipm::walker::{hit_and_run_step, ChainState};
use anneal_ipm::{BoltzmannParams, ConvexBody};
use criterion::{criterion_group, criterion_main, Criterion};
use nalgebra::{DMatrix, DVector};
use std::hint::black_box;

fn hit_and_run(c: &mut Criterion) {
    let mut g = c.benchmark_group("hit_and_run_step");
    for n in [2usize, 10, 50] {
        let body = ConvexBody::cube(n, -1.0, 1.0).unwrap();
        let p = BoltzmannParams::new(&body, DVector::from_element(n, 1.0)).unwrap();
        let mut state = ChainState::new(&body, DVector::zeros(n), 1, 0).unwrap();
        g.bench_function(format!("box_n{n}"), |b| b.iter(|| hit_and_run_step(&mut state, black_box(&p)).unwrap()));
        let ball = ConvexBody::unit_ball(n).unwrap();
        let p = BoltzmannParams::new(&ball, DVector::from_element(n, 1.0)).unwrap();
        let mut state = ChainState::new(&ball, DVector::zeros(n), 1, 0).unwrap();
        g.bench_function(format!("ball_n{n}"), |b| b.iter(|| hit_and_run_step(&mut state, black_box(&p)).unwrap()));
    }
    g.finish();
}

fn triangle_moments(c: &mut Criterion) {
    let tri = ConvexBody::simplex(2).unwrap();
    let p = BoltzmannParams::new(&tri, DVector::from_column_slice(&[3.0, -1.0])).unwrap();
    c.bench_function("moments_triangle", |b| b.iter(|| moments(black_box(&p)).unwrap()));
}

fn lp_path(c: &mut Criterion) {
    let n = 5;
    // Cube [-1, 1]^5 with a few corner cuts.
    let mut rows = Vec::new();
    let mut b = Vec::new();
    for i in 0..n {
        for s in [1.0, -1.0] {
            let mut r = vec![0.0; n];
            r[i] = s;
            rows.extend(r);
            b.push(1.0);
        }
    }
    for k in 0..5 {
        let r: Vec<f64> = (0..n).map(|i| if (i + k) % 2 == 0 { 0.5 } else { -0.5 }).collect();
        rows.extend(r);
        b.push(0.9);
    }
    let m = b.len();
    let a = DMatrix::from_row_slice(m, n, &rows);
    let lb = LogBarrier::from_halfspaces(a, DVector::from_vec(b), DVector::zeros(n)).unwrap();
    let obj = DVector::from_column_slice(&[1.0, -0.5, 0.25, 0.8, -0.3]);
    let mut g = c.benchmark_group("follow_path");
    g.sample_size(10);
    g.bench_function("log_barrier_5d_eps1e-4", |bch| {
        bch.iter(|| follow_path(&lb, black_box(&obj), 1e-4, &FollowOptions::default()).unwrap())
    });
    g.finish();
}

criterion_group!(benches, hit_and_run, triangle_moments, lp_path);
criterion_main!(benches);
