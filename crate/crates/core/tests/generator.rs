//! Generator shape contracts and identities of the untrained network.

use contourrend::data::{gen_sample, Category};
use contourrend::generator::{Generator, GeneratorConfig, GeneratorGrads};
use contourrend::geometry::initial_contour;
use contourrend::numerics::{ParamStore, Tensor};
use contourrend::{ContourRend, RendererConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn desk() -> (Generator, ParamStore) {
    let mut store = ParamStore::new();
    let g = Generator::new(GeneratorConfig::default(), &mut store, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    (g, store)
}

#[test]
fn desk_shapes() {
    let (g, p) = desk();
    let img = gen_sample(0, Category::Star, 64).unwrap().image;
    let bb = g.backbone_forward(&p, &img).unwrap();
    assert_eq!(bb.shape(), &[32, 16, 16]);
    let (e, v) = g.branches_forward(&p, &bb).unwrap();
    assert_eq!(e.shape(), &[1, 16, 16]);
    assert_eq!(v.shape(), &[1, 16, 16]);
    assert!(e.data().iter().chain(v.data()).all(|&x| x > 0.0 && x < 1.0));
    let fused = g.fuse_features(&p, &bb, &e, &v).unwrap();
    assert_eq!(fused.shape(), &[24, 16, 16]);
    assert_eq!(p.get("fuse.weight").unwrap().value.shape(), &[24, 34, 3, 3]);
    assert!(g.backbone_forward(&p, &Tensor::zeros(&[3, 32, 32])).is_err());
}

#[test]
fn full_size_dimensions() {
    let c = GeneratorConfig::full_size();
    assert_eq!(c.stages(), 3);
    assert_eq!(c.image_size >> c.stages(), c.grid_size);
    assert_eq!(c.backbone_channels + 2, 514);
    assert_eq!(c.fused_channels, 320);
    assert_eq!(c.node_input_dim(), 322);
    assert_eq!(c.num_vertices, 60);
}

#[test]
fn zero_image_and_biases_give_zero_backbone() {
    let (g, p) = desk();
    let bb = g.backbone_forward(&p, &Tensor::zeros(&[3, 64, 64])).unwrap();
    assert!(bb.data().iter().all(|&v| v == 0.0));
}

#[test]
fn zero_branch_weights_give_one_half() {
    let (g, mut p) = desk();
    for (name, param) in p.iter_mut() {
        if name.starts_with("edge.") || name.starts_with("vertex.") {
            param.value.fill(0.0);
        }
    }
    let img = gen_sample(3, Category::Blob, 64).unwrap().image;
    let bb = g.backbone_forward(&p, &img).unwrap();
    let (e, v) = g.branches_forward(&p, &bb).unwrap();
    assert!(e.data().iter().chain(v.data()).all(|&x| x == 0.5));
}

#[test]
fn fresh_model_predicts_initial_circle_exactly() {
    for seed in 0..4 {
        let (m, p) = ContourRend::init(GeneratorConfig::default(), RendererConfig::default(), seed).unwrap();
        let img = gen_sample(seed, Category::ALL[seed as usize], 64).unwrap().image;
        let out = m.generator().predict_contour(&p, &img).unwrap();
        assert_eq!(out.contour, initial_contour(20).unwrap());
        assert!(out.backbone_fm.all_finite() && out.fused_fm.all_finite());
    }
}

#[test]
fn coordinate_gradient_reaches_features_on_nonconstant_map() {
    let (g, p) = desk();
    let img = gen_sample(5, Category::Notched, 64).unwrap().image;
    let (out, tape) = g.forward(&p, &img).unwrap();
    let up = GeneratorGrads {
        contour: vec![[1.0, -0.5]; 20],
        ..GeneratorGrads::default()
    };
    let mut grads = p.zero_gradients();
    g.backward(&p, &out, &tape, &up, &mut grads).unwrap();
    // offset head gets gradient directly; the fused features get it through sampling
    let id = p.id("offset.weight").unwrap();
    assert!(grads.get(id).max_abs() > 0.0);
    assert!(grads.all_finite());
}

#[test]
fn renderer_loss_reaches_backbone() {
    let cfg = GeneratorConfig::default();
    let (m, mut p) = ContourRend::init(cfg.clone(), RendererConfig::default(), 2).unwrap();
    // a non-zero head is needed for gradient to flow below it
    p.get_mut("renderer.weight").unwrap().value.data_mut().iter_mut().enumerate().for_each(|(i, v)| *v = ((i % 7) as f64 - 3.0) * 0.05);
    let s = gen_sample(8, Category::LShape, 64).unwrap();
    let ex = contourrend::TrainExample::new(&s, cfg.num_vertices).unwrap();
    let mut with = p.zero_gradients();
    m.loss_and_grad(&p, &ex, 1, Some(&mut with)).unwrap();
    let rcfg = RendererConfig {
        loss_weight: 0.0,
        ..RendererConfig::default()
    };
    let m0 = ContourRend::bind(cfg, rcfg, &p).unwrap();
    let mut without = p.zero_gradients();
    m0.loss_and_grad(&p, &ex, 1, Some(&mut without)).unwrap();
    let id = p.id("backbone.conv1.weight").unwrap();
    let diff: f64 = with.get(id).data().iter().zip(without.get(id).data()).map(|(a, b)| (a - b).abs()).sum();
    assert!(diff > 0.0);
}
