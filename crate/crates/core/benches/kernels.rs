//! Sequential vs parallel kernels. The scan pair compares the straight
//! recurrence with the chunked associative scan; the conv and training-step
//! groups run the same rayon build on a one-thread pool and on the global
//! pool.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ovsr_core::gradcheck::randn;
use ovsr_core::ssm::{scan_parallel, scan_sequential, ScanInputs, SsmState};
use ovsr_core::tensor::ConvGeometry;
use ovsr_core::{Tape, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

fn scan_inputs(l: usize, c: usize, s: usize) -> (ScanInputs, SsmState) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut t = |shape: &[usize], f: fn(f64) -> f64| randn(&mut rng, shape).map(f).cast::<f32>();
    let inp = ScanInputs {
        x: t(&[l, c], |v| v),
        delta: t(&[l, c], |v| v.exp().ln_1p()),
        a: t(&[c, s], |v| -v.exp()),
        b: t(&[l, s], |v| v),
        c: t(&[l, s], |v| v),
        d: t(&[c], |v| v),
    };
    (inp, SsmState::zeros(c, s))
}

fn scans(cr: &mut Criterion) {
    let mut g = cr.benchmark_group("selective_scan");
    for l in [256, 4096] {
        let (inp, h0) = scan_inputs(l, 32, 16);
        g.bench_with_input(BenchmarkId::new("sequential", l), &l, |b, _| {
            b.iter(|| scan_sequential(black_box(&inp), &h0).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("chunked", l), &l, |b, _| {
            b.iter(|| scan_parallel(black_box(&inp), &h0).unwrap())
        });
    }
    g.finish();
}

fn conv_step(x: &Tensor, w: &Tensor) {
    let tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let wv = tape.leaf(w.clone());
    let geom = ConvGeometry {
        padding: [0, 1, 1],
        ..Default::default()
    };
    let y = xv.conv2d(&wv, None, geom).unwrap();
    tape.backward(y.square().sum()).unwrap();
}

fn convs(cr: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let mut g = cr.benchmark_group("conv2d_fwd_bwd");
    for (c, side) in [(16, 64), (64, 32)] {
        let x: Tensor = randn(&mut rng, &[c, side, side]).cast();
        let w: Tensor = randn(&mut rng, &[c, c, 3, 3]).cast();
        let id = format!("c{c}_{side}x{side}");
        g.bench_function(BenchmarkId::new("one_thread", &id), |b| b.iter(|| single.install(|| conv_step(&x, &w))));
        g.bench_function(BenchmarkId::new("global_pool", &id), |b| b.iter(|| conv_step(&x, &w)));
    }
    g.finish();
}

criterion_group!(benches, scans, convs);
criterion_main!(benches);
