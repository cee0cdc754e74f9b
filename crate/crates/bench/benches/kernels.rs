use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use repscore::complexity::{gaussian_entropy_of, DEFAULT_ENTROPY_FLOOR};
use repscore::{block_dct, dct2, ridge_fit, rng, ImageTensor};

fn image(side: usize) -> ImageTensor {
    let mut r = rng::rng(1);
    ImageTensor::from_fn(side, side, 3, |_, _, _| r.random::<f64>())
}

fn gaussian(rows: usize, cols: usize) -> DMatrix<f64> {
    let mut r = rng::rng(2);
    DMatrix::from_fn(rows, cols, |_, _| r.sample::<f64, _>(StandardNormal))
}

fn transforms(c: &mut Criterion) {
    let mut group = c.benchmark_group("dct");
    for side in [16, 32, 64] {
        let img = image(side);
        group.bench_with_input(BenchmarkId::new("full_frame", side), &img, |b, img| b.iter(|| dct2(black_box(img))));
        group.bench_with_input(BenchmarkId::new("block8", side), &img, |b, img| {
            b.iter(|| block_dct(black_box(img), 8).unwrap())
        });
    }
    group.finish();
}

fn ridge(c: &mut Criterion) {
    let mut group = c.benchmark_group("ridge_fit");
    // primal below the batch size, dual above it
    for cols in [64, 512, 3072] {
        let x = gaussian(256, cols);
        let y = gaussian(256, 3);
        group.bench_with_input(BenchmarkId::from_parameter(cols), &cols, |b, _| {
            b.iter(|| ridge_fit(black_box(&x), black_box(&y), 0.1).unwrap())
        });
    }
    group.finish();
}

fn entropy(c: &mut Criterion) {
    let mut group = c.benchmark_group("gaussian_entropy");
    for cols in [50, 192] {
        let x = gaussian(2000, cols);
        group.bench_with_input(BenchmarkId::from_parameter(cols), &x, |b, x| {
            b.iter(|| gaussian_entropy_of(black_box(x), DEFAULT_ENTROPY_FLOOR).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, transforms, ridge, entropy);
criterion_main!(benches);
