//! Finite-difference checks and geometric oracles shared by the test targets.

#![allow(dead_code)]

use contourrend::generator::{gcn_layer, gcn_layer_backward, matching_loss, ring_adjacency};
use contourrend::numerics::*;
use contourrend::{Contour, Point01};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-4;
pub const OP_TOL: f64 = 1e-4;

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / (a.abs() + n.abs()).max(1e-8)
}

/// Max relative error between `analytic` and central differences of `f`
/// around `x`, probing every coordinate.
pub fn fd_max_err(x: &[f64], analytic: &[f64], f: impl Fn(&[f64]) -> f64) -> f64 {
    assert_eq!(x.len(), analytic.len());
    let mut probe = x.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        probe[i] = x[i] + H;
        let plus = f(&probe);
        probe[i] = x[i] - H;
        let minus = f(&probe);
        probe[i] = x[i];
        worst = worst.max(rel_err(analytic[i], (plus - minus) / (2.0 * H)));
    }
    worst
}

pub fn rand_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Values bounded away from zero, for inputs of piecewise-linear ops.
fn rand_nonzero(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let v: f64 = rng.random_range(0.05..1.0);
            if rng.random_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect()
}

fn t(shape: &[usize], data: Vec<f64>) -> Tensor {
    Tensor::from_vec(shape, data).unwrap()
}

fn weighted(y: &Tensor, w: &[f64]) -> f64 {
    y.data().iter().zip(w).map(|(a, b)| a * b).sum()
}

fn pairs(v: &[f64]) -> Vec<[f64; 2]> {
    v.chunks_exact(2).map(|c| [c[0], c[1]]).collect()
}

pub fn linear_errors(seed: u64) -> Vec<(&'static str, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (m, din, dout) = (3, 5, 4);
    let x = rand_vec(&mut rng, m * din, -1.0, 1.0);
    let w = rand_vec(&mut rng, dout * din, -1.0, 1.0);
    let b = rand_vec(&mut rng, dout, -1.0, 1.0);
    let up = rand_vec(&mut rng, m * dout, -1.0, 1.0);
    let f = |x: &[f64], w: &[f64], b: &[f64]| {
        weighted(&linear_forward(&t(&[m, din], x.to_vec()), &t(&[dout, din], w.to_vec()), &t(&[dout], b.to_vec())).unwrap(), &up)
    };
    let g = linear_backward(&t(&[m, din], x.clone()), &t(&[dout, din], w.clone()), &t(&[m, dout], up.clone())).unwrap();
    vec![
        ("linear dx", fd_max_err(&x, g.dx.data(), |v| f(v, &w, &b))),
        ("linear dw", fd_max_err(&w, g.dw.data(), |v| f(&x, v, &b))),
        ("linear db", fd_max_err(&b, g.db.data(), |v| f(&x, &w, v))),
    ]
}

/// Kernel sizes 1 and 3, strides 1 and 2.
pub fn conv_errors(seed: u64) -> Vec<(&'static str, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
    let mut out = Vec::new();
    for &(k, stride) in &[(1, 1), (3, 1), (1, 2), (3, 2)] {
        let (c, hh, ww, cout) = (2, 5, 6, 3);
        let xs = [c, hh, ww];
        let ks = [cout, c, k, k];
        let x = rand_vec(&mut rng, c * hh * ww, -1.0, 1.0);
        let kern = rand_vec(&mut rng, cout * c * k * k, -1.0, 1.0);
        let b = rand_vec(&mut rng, cout, -1.0, 1.0);
        let (ho, wo) = (conv_output_size(hh, k, stride), conv_output_size(ww, k, stride));
        let up = rand_vec(&mut rng, cout * ho * wo, -1.0, 1.0);
        let f = |x: &[f64], kern: &[f64], b: &[f64]| {
            let y = conv2d_forward(&t(&xs, x.to_vec()), &t(&ks, kern.to_vec()), &t(&[cout], b.to_vec()), stride).unwrap();
            weighted(&y, &up)
        };
        let g = conv2d_backward(&t(&xs, x.clone()), &t(&ks, kern.clone()), stride, &t(&[cout, ho, wo], up.clone()), true).unwrap();
        out.push(("conv dx", fd_max_err(&x, g.dx.as_ref().unwrap().data(), |v| f(v, &kern, &b))));
        out.push(("conv dk", fd_max_err(&kern, g.dk.data(), |v| f(&x, v, &b))));
        out.push(("conv db", fd_max_err(&b, g.db.data(), |v| f(&x, &kern, v))));
    }
    out
}

pub fn activation_errors(seed: u64) -> Vec<(&'static str, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
    let x = rand_nonzero(&mut rng, 12);
    let up = rand_vec(&mut rng, 12, -1.0, 1.0);
    let d = relu_backward(&t(&[12], x.clone()), &t(&[12], up.clone())).unwrap();
    let relu_err = fd_max_err(&x, d.data(), |v| weighted(&relu(&t(&[12], v.to_vec())), &up));
    let z = rand_vec(&mut rng, 12, -4.0, 4.0);
    let y = sigmoid(&t(&[12], z.clone()));
    let d = sigmoid_backward(&y, &t(&[12], up.clone())).unwrap();
    let sig_err = fd_max_err(&z, d.data(), |v| weighted(&sigmoid(&t(&[12], v.to_vec())), &up));
    vec![("relu", relu_err), ("sigmoid", sig_err)]
}

pub fn loss_errors(seed: u64) -> Vec<(&'static str, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
    let m = 7;
    let logits = rand_vec(&mut rng, m * 2, -3.0, 3.0);
    let labels: Vec<u8> = (0..m).map(|_| rng.random_range(0..2)).collect();
    let (_, g) = softmax_cross_entropy(&t(&[m, 2], logits.clone()), &labels).unwrap();
    let ce = fd_max_err(&logits, g.data(), |v| softmax_cross_entropy(&t(&[m, 2], v.to_vec()), &labels).unwrap().0);

    let z = rand_vec(&mut rng, 9, -3.0, 3.0);
    let targets = t(&[9], (0..9).map(|_| rng.random_range(0..2) as f64).collect());
    let (_, g) = bce_with_logits(&t(&[9], z.clone()), &targets).unwrap();
    let bce = fd_max_err(&z, g.data(), |v| bce_with_logits(&t(&[9], v.to_vec()), &targets).unwrap().0);
    vec![("cross-entropy", ce), ("bce", bce)]
}

/// Coordinate in [0,1] whose grid position stays clear of cell boundaries.
fn off_grid(rng: &mut ChaCha8Rng, cells: usize) -> f64 {
    let cell = rng.random_range(0..cells) as f64;
    (cell + rng.random_range(0.05..0.95)) / cells as f64
}

pub fn bilinear_errors(seed: u64) -> Vec<(&'static str, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(400 + seed);
    let (c, hh, ww) = (3, 5, 4);
    let fm = rand_vec(&mut rng, c * hh * ww, -1.0, 1.0);
    let pts: Vec<Point01> = (0..6).map(|_| Point01::new(off_grid(&mut rng, ww - 1), off_grid(&mut rng, hh - 1))).collect();
    let up = rand_vec(&mut rng, pts.len() * c, -1.0, 1.0);
    let fm_t = t(&[c, hh, ww], fm.clone());
    let (dfm, dpts) = bilinear_backward(&fm_t, &pts, &t(&[pts.len(), c], up.clone())).unwrap();
    let f_map = |v: &[f64]| weighted(&bilinear_sample(&t(&[c, hh, ww], v.to_vec()), &pts).unwrap(), &up);
    let xy: Vec<f64> = pts.iter().flat_map(|p| [p.x, p.y]).collect();
    let dxy: Vec<f64> = dpts.iter().flat_map(|d| *d).collect();
    let f_pts = |v: &[f64]| {
        let p: Vec<Point01> = v.chunks_exact(2).map(|q| Point01::new(q[0], q[1])).collect();
        weighted(&bilinear_sample(&fm_t, &p).unwrap(), &up)
    };
    vec![
        ("bilinear map", fd_max_err(&fm, dfm.data(), f_map)),
        ("bilinear coords", fd_max_err(&xy, &dxy, f_pts)),
    ]
}

pub fn gcn_errors(seed: u64) -> Vec<(&'static str, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
    let (k, din, dout) = (6, 4, 3);
    let g = ring_adjacency(k).unwrap();
    let h = rand_vec(&mut rng, k * din, -1.0, 1.0);
    let ws = rand_vec(&mut rng, dout * din, -1.0, 1.0);
    let wn = rand_vec(&mut rng, dout * din, -1.0, 1.0);
    let b = rand_vec(&mut rng, dout, -1.0, 1.0);
    let up = rand_vec(&mut rng, k * dout, -1.0, 1.0);
    let f = |h: &[f64], ws: &[f64], wn: &[f64], b: &[f64]| {
        let y = gcn_layer(
            &t(&[k, din], h.to_vec()),
            &g,
            &t(&[dout, din], ws.to_vec()),
            &t(&[dout, din], wn.to_vec()),
            &t(&[dout], b.to_vec()),
        )
        .unwrap();
        weighted(&y, &up)
    };
    let gg = gcn_layer_backward(
        &t(&[k, din], h.clone()),
        &g,
        &t(&[dout, din], ws.clone()),
        &t(&[dout, din], wn.clone()),
        &t(&[dout], b.clone()),
        &t(&[k, dout], up.clone()),
    )
    .unwrap();
    vec![
        ("gcn dh", fd_max_err(&h, gg.dh.data(), |v| f(v, &ws, &wn, &b))),
        ("gcn dw_self", fd_max_err(&ws, gg.dw_self.data(), |v| f(&h, v, &wn, &b))),
        ("gcn dw_neigh", fd_max_err(&wn, gg.dw_neigh.data(), |v| f(&h, &ws, v, &b))),
        ("gcn db", fd_max_err(&b, gg.db.data(), |v| f(&h, &ws, &wn, v))),
    ]
}

pub fn matching_errors(seed: u64) -> Vec<(&'static str, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(600 + seed);
    let k = 7;
    let pred = rand_vec(&mut rng, 2 * k, 0.05, 0.95);
    let target = Contour::from_xy(&pairs(&rand_vec(&mut rng, 2 * k, 0.05, 0.95))).unwrap();
    let to_contour = |v: &[f64]| Contour::from_xy(&pairs(v)).unwrap();
    let r = matching_loss(&to_contour(&pred), &target).unwrap();
    let grad: Vec<f64> = r.grad.iter().flat_map(|g| *g).collect();
    vec![(
        "matching",
        fd_max_err(&pred, &grad, |v| matching_loss(&to_contour(v), &target).unwrap().loss),
    )]
}

/// Every per-op check for one seed.
pub fn all_op_errors(seed: u64) -> Vec<(&'static str, f64)> {
    let mut out = linear_errors(seed);
    out.extend(conv_errors(seed));
    out.extend(activation_errors(seed));
    out.extend(loss_errors(seed));
    out.extend(bilinear_errors(seed));
    out.extend(gcn_errors(seed));
    out.extend(matching_errors(seed));
    out
}

/// Even-odd test written independently of the library: a horizontal ray to
/// the right crosses an edge when the edge straddles the ray's row.
pub fn oracle_inside(x: f64, y: f64, c: &Contour) -> bool {
    let v = c.vertices();
    let mut inside = false;
    let mut j = v.len() - 1;
    for i in 0..v.len() {
        let (a, b) = (v[j], v[i]);
        if (a.y > y) != (b.y > y) {
            let xi = a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y);
            if x < xi {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Pixel `(r, c)` is sampled at its center `((c + 0.5)/W, (r + 0.5)/H)`.
pub fn oracle_mask(c: &Contour, h: usize, w: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(h * w);
    for r in 0..h {
        for col in 0..w {
            out.push(oracle_inside((col as f64 + 0.5) / w as f64, (r as f64 + 0.5) / h as f64, c) as u8);
        }
    }
    out
}

/// Minimum over every cyclic shift of the summed Euclidean distances.
pub fn brute_force_matching(pred: &Contour, target: &Contour) -> f64 {
    let (p, t) = (pred.vertices(), target.vertices());
    let k = p.len();
    let mut best = f64::INFINITY;
    for j in 0..k {
        let mut s = 0.0;
        for i in 0..k {
            let q = t[(i + j) % k];
            let (dx, dy) = (p[i].x - q.x, p[i].y - q.y);
            s += (dx * dx + dy * dy).sqrt();
        }
        if s < best {
            best = s;
        }
    }
    best
}

/// Star-shaped polygon with `k` vertices at increasing angle, which is
/// simple and clockwise on screen.
pub fn random_star(rng: &mut ChaCha8Rng, k: usize) -> Contour {
    let cx = rng.random_range(0.35..0.65);
    let cy = rng.random_range(0.35..0.65);
    let base = rng.random_range(0.0..std::f64::consts::TAU);
    let pts: Vec<[f64; 2]> = (0..k)
        .map(|i| {
            let t = base + std::f64::consts::TAU * (i as f64 + rng.random_range(0.1..0.9)) / k as f64;
            let r = rng.random_range(0.05..0.3);
            [cx + r * t.cos(), cy + r * t.sin()]
        })
        .collect();
    Contour::from_xy(&pts).unwrap()
}
