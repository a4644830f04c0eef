//! Contour renderer: samples points around contour vertices, classifies
//! them from backbone features with a per-point linear head, and pastes the
//! classifications onto the rasterized contour.

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{point_in_polygon, rasterize_polygon, Contour, Mask, Point01};
use crate::layers::{Linear, ParamBuilder};
use crate::numerics::{linear_forward, softmax, softmax_cross_entropy, ParamStore, Tensor};

/// Where training targets for sampled points come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetSource {
    /// Ground-truth region.
    GroundTruth,
    /// Region enclosed by the predicted contour.
    Predicted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RendererConfig {
    pub train_samples_per_vertex: usize,
    pub train_offset_range: f64,
    pub test_grid_side: usize,
    pub test_square_size: f64,
    pub fg_threshold: f64,
    pub loss_weight: f64,
    pub target_source: TargetSource,
}

impl Default for RendererConfig {
    fn default() -> Self {
        Self {
            train_samples_per_vertex: 3,
            train_offset_range: 0.09,
            test_grid_side: 15,
            test_square_size: 0.09,
            fg_threshold: 0.3,
            loss_weight: 1.0,
            target_source: TargetSource::GroundTruth,
        }
    }
}

impl RendererConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: &str| {
            Err(Error::Config {
                key: key.into(),
                msg: msg.into(),
            })
        };
        if self.test_grid_side < 1 {
            return bad("grid_n", "must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.test_square_size) {
            return bad("square_s", "must lie in [0, 1]");
        }
        if !(self.fg_threshold > 0.0 && self.fg_threshold < 1.0) {
            return bad("threshold", "must lie in (0, 1)");
        }
        if self.train_offset_range.is_nan() || self.train_offset_range < 0.0 {
            return bad("offset_range", "must be non-negative");
        }
        if self.loss_weight.is_nan() || self.loss_weight < 0.0 {
            return bad("lambda", "must be non-negative");
        }
        Ok(())
    }
}

/// `n` jittered copies of every vertex, offsets uniform in `[−r, r]` per
/// coordinate, clamped to the unit square. Vertex-major order.
pub fn sample_train_points<R: Rng + ?Sized>(c: &Contour, n: usize, r: f64, rng: &mut R) -> Vec<Point01> {
    let mut out = Vec::with_capacity(c.len() * n);
    for v in c.vertices() {
        for _ in 0..n {
            let (dx, dy) = if r > 0.0 {
                (rng.random_range(-r..=r), rng.random_range(-r..=r))
            } else {
                (0.0, 0.0)
            };
            out.push(Point01::new(v.x + dx, v.y + dy).clamped());
        }
    }
    out
}

/// Offsets of an `N×N` grid spanning an `s×s` square centred on the origin.
/// `N = 1` is the single point at the origin.
pub fn grid_offsets(n: usize, s: f64) -> Vec<f64> {
    if n <= 1 {
        return vec![0.0];
    }
    (0..n).map(|i| (i as f64 / (n - 1) as f64 - 0.5) * s).collect()
}

/// An `N×N` grid of gap `s/(N−1)` centred on each vertex; vertex-major,
/// then row-major (y outer, x inner), clamped to the unit square.
pub fn sample_test_grid(c: &Contour, n: usize, s: f64) -> Vec<Point01> {
    let offs = grid_offsets(n, s);
    let mut out = Vec::with_capacity(c.len() * offs.len() * offs.len());
    for v in c.vertices() {
        for &oy in &offs {
            for &ox in &offs {
                out.push(Point01::new(v.x + ox, v.y + oy).clamped());
            }
        }
    }
    out
}

/// Ground truth for point labels.
#[derive(Debug, Clone, Copy)]
pub enum Region<'a> {
    Contour(&'a Contour),
    Mask(&'a Mask),
}

/// Pixel `(row, col)` a point is pasted into: `(round(y·(H−1)), round(x·(W−1)))`
/// after clamping to the unit square.
pub fn paste_pixel(p: Point01, height: usize, width: usize) -> (usize, usize) {
    let p = p.clamped();
    (
        (p.y * (height - 1) as f64).round() as usize,
        (p.x * (width - 1) as f64).round() as usize,
    )
}

/// 1 where the point lies inside the region. Mask lookups read the pixel
/// the point would be pasted into.
pub fn point_targets(points: &[Point01], region: Region<'_>) -> Vec<u8> {
    match region {
        Region::Contour(c) => points.iter().map(|&p| point_in_polygon(p, c) as u8).collect(),
        Region::Mask(m) => points
            .iter()
            .map(|&p| {
                let (row, col) = paste_pixel(p, m.height(), m.width());
                m.get(row, col)
            })
            .collect(),
    }
}

/// Mean cross-entropy of point logits, with its logit gradient.
pub fn renderer_loss(scores: &Tensor, labels: &[u8]) -> Result<(f64, Tensor)> {
    softmax_cross_entropy(scores, labels)
}

/// Foreground probability (softmax column 1) per point.
pub fn foreground_probs(scores: &Tensor) -> Result<Vec<f64>> {
    let p = softmax(scores)?;
    Ok(p.data().chunks_exact(2).map(|r| r[1]).collect())
}

/// Rasterizes `contour`, then writes each point's class into pixel
/// `(round(y·(H−1)), round(x·(W−1)))`: foreground iff `prob > threshold`.
/// Later points overwrite earlier ones.
pub fn render_mask(
    contour: &Contour,
    points: &[Point01],
    fg_probs: &[f64],
    threshold: f64,
    height: usize,
    width: usize,
) -> Result<Mask> {
    if points.len() != fg_probs.len() {
        return Err(Error::ShapeMismatch {
            op: "render_mask",
            left: vec![points.len()],
            right: vec![fg_probs.len()],
        });
    }
    let mut mask = rasterize_polygon(contour, height, width)?;
    for (&p, &prob) in points.iter().zip(fg_probs) {
        let (row, col) = paste_pixel(p, height, width);
        mask.set(row, col, (prob > threshold) as u8);
    }
    Ok(mask)
}

/// The per-point classifier: one affine map from backbone features to
/// (background, foreground) logits, equivalent to a 1×1 convolution.
#[derive(Debug, Clone)]
pub struct RendererHead {
    linear: Linear,
    channels: usize,
}

impl RendererHead {
    pub(crate) fn build<R: Rng>(pb: &mut ParamBuilder<'_, R>, channels: usize) -> Result<Self> {
        Ok(Self {
            linear: pb.linear("renderer", channels, 2, true)?,
            channels,
        })
    }

    pub(crate) fn linear(&self) -> &Linear {
        &self.linear
    }

    /// `M×C_b → M×2` logits.
    pub fn classify_points(&self, p: &ParamStore, features: &Tensor) -> Result<Tensor> {
        classify_points(features, p.value(self.linear.w), p.value(self.linear.b), self.channels)
    }
}

/// `M×C_b → M×2` with explicit weights.
pub fn classify_points(features: &Tensor, w: &Tensor, b: &Tensor, channels: usize) -> Result<Tensor> {
    features.expect_ndim("classify_points", 2)?;
    if features.dim(1) != channels {
        return Err(Error::ShapeMismatch {
            op: "classify_points",
            left: features.shape().to_vec(),
            right: vec![features.dim(0), channels],
        });
    }
    linear_forward(features, w, b)
}
