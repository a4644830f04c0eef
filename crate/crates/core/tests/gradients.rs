//! Central-difference checks of every hand-written backward pass.

use contourrend::numerics::{AdamW, ParamStore, Tensor};

mod common;
use common::*;

const SEEDS: u64 = 20;

fn assert_all_within(check: fn(u64) -> Vec<(&'static str, f64)>) {
    for seed in 0..SEEDS {
        for (name, err) in check(seed) {
            assert!(err < OP_TOL, "{name} seed {seed}: rel err {err:e}");
        }
    }
}

#[test]
fn linear_gradients() {
    assert_all_within(linear_errors);
}

#[test]
fn conv_gradients_all_kernel_and_stride_combinations() {
    assert_all_within(conv_errors);
}

#[test]
fn relu_and_sigmoid_gradients() {
    assert_all_within(activation_errors);
}

#[test]
fn cross_entropy_and_bce_gradients() {
    assert_all_within(loss_errors);
}

#[test]
fn bilinear_gradients_for_map_and_coordinates() {
    assert_all_within(bilinear_errors);
}

#[test]
fn gcn_layer_gradients() {
    assert_all_within(gcn_errors);
}

#[test]
fn matching_loss_gradient_with_unique_shift() {
    assert_all_within(matching_errors);
}

#[test]
fn adamw_matches_reference_update() {
    let mut store = ParamStore::new();
    let id = store.insert("w", Tensor::from_vec(&[3], vec![1.0, -2.0, 0.5]).unwrap()).unwrap();
    let grads = [[0.1, -0.2, 0.3], [0.05, 0.0, -0.4]];
    let (lr, wd, b1, b2, eps) = (1e-2, 0.1, 0.9, 0.999, 1e-8);
    let mut opt = AdamW::new(&store, lr, wd);
    let mut theta = [1.0, -2.0, 0.5];
    let (mut m, mut v) = ([0.0; 3], [0.0; 3]);
    for (step, g) in grads.iter().enumerate() {
        store.grad_mut(id).data_mut().copy_from_slice(g);
        opt.step(&mut store);
        let tstep = (step + 1) as i32;
        for i in 0..3 {
            theta[i] *= 1.0 - lr * wd;
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let mh = m[i] / (1.0 - b1.powi(tstep));
            let vh = v[i] / (1.0 - b2.powi(tstep));
            theta[i] -= lr * mh / (vh.sqrt() + eps);
        }
    }
    assert_eq!(store.value(id).data(), &theta);
}
