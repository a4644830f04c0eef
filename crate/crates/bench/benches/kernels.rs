use std::hint::black_box;

use contourrend::generator::matching_loss;
use contourrend::geometry::{rasterize_polygon, resample_contour};
use contourrend::numerics::{conv2d_backward, conv2d_forward};
use contourrend::{ContourRend, GeneratorConfig, RendererConfig, TrainExample};
use contourrend_bench::{random_tensor, samples, star};
use criterion::{criterion_group, criterion_main, Criterion};

fn conv(c: &mut Criterion) {
    let x = random_tensor(1, &[32, 16, 16]);
    let k = random_tensor(2, &[32, 32, 3, 3]);
    let b = random_tensor(3, &[32]);
    let dy = random_tensor(4, &[32, 16, 16]);
    c.bench_function("conv2d_forward 32x16x16 k3", |bench| {
        bench.iter(|| conv2d_forward(black_box(&x), &k, &b, 1).unwrap())
    });
    c.bench_function("conv2d_backward 32x16x16 k3", |bench| {
        bench.iter(|| conv2d_backward(black_box(&x), &k, 1, &dy, true).unwrap())
    });
}

fn geometry(c: &mut Criterion) {
    let poly = star(7, 40);
    c.bench_function("rasterize 40-gon 64x64", |bench| {
        bench.iter(|| rasterize_polygon(black_box(&poly), 64, 64).unwrap())
    });
    let (p, q) = (star(8, 20), star(9, 20));
    c.bench_function("matching_loss K=20", |bench| bench.iter(|| matching_loss(black_box(&p), &q).unwrap()));
}

fn model(c: &mut Criterion) {
    let (model, params) = ContourRend::init(GeneratorConfig::default(), RendererConfig::default(), 0).unwrap();
    let data = samples(11, 64);
    let image = &data[3].image;
    c.bench_function("predict desk config", |bench| bench.iter(|| model.predict(&params, black_box(image)).unwrap()));
    let ex = TrainExample {
        sample: &data[3],
        target: resample_contour(&data[3].gt_contour, 20).unwrap(),
    };
    let mut grads = params.zero_gradients();
    c.bench_function("loss_and_grad desk config", |bench| {
        bench.iter(|| {
            grads.zero();
            model.loss_and_grad(&params, black_box(&ex), 1, Some(&mut grads)).unwrap()
        })
    });
}

criterion_group!(benches, conv, geometry, model);
criterion_main!(benches);
