//! Corner-aligned bilinear sampling: position `u ∈ [0, 1]` maps to the
//! continuous grid index `u · (G − 1)`.

use super::Tensor;
use crate::error::{Error, Result};
use crate::geometry::Point01;

#[derive(Debug, Clone, Copy)]
struct Taps {
    x0: usize,
    y0: usize,
    tx: f64,
    ty: f64,
    // d(tx)/d(x) and d(ty)/d(y); zero when the coordinate was clamped
    sx: f64,
    sy: f64,
}

fn taps(p: Point01, h: usize, w: usize) -> Taps {
    let axis = |u: f64, n: usize| {
        let scale = (n - 1) as f64;
        let g = u * scale;
        let (g, slope) = if g < 0.0 {
            (0.0, 0.0)
        } else if g > scale {
            (scale, 0.0)
        } else {
            (g, scale)
        };
        let i0 = (g.floor() as usize).min(n - 2);
        (i0, g - i0 as f64, slope)
    };
    let (x0, tx, sx) = axis(p.x, w);
    let (y0, ty, sy) = axis(p.y, h);
    Taps { x0, y0, tx, ty, sx, sy }
}

/// Top-left grid cell used for `p` on an `h×w` grid.
pub(crate) fn cell(p: Point01, h: usize, w: usize) -> (usize, usize) {
    let t = taps(p, h, w);
    (t.x0, t.y0)
}

fn check(fm: &Tensor) -> Result<(usize, usize, usize)> {
    fm.expect_ndim("bilinear_sample", 3)?;
    let (c, h, w) = (fm.dim(0), fm.dim(1), fm.dim(2));
    if h < 2 || w < 2 {
        return Err(Error::invalid(format!(
            "bilinear_sample: grid must be at least 2×2, got {h}×{w}"
        )));
    }
    Ok((c, h, w))
}

/// Samples every channel of `fm: C×H×W` at each point, giving `M×C`.
pub fn bilinear_sample(fm: &Tensor, points: &[Point01]) -> Result<Tensor> {
    let (c, h, w) = check(fm)?;
    let fd = fm.data();
    let plane = h * w;
    let mut out = Tensor::zeros(&[points.len(), c]);
    for (row, &p) in out.data_mut().chunks_exact_mut(c).zip(points) {
        let t = taps(p, h, w);
        let i00 = t.y0 * w + t.x0;
        let (w00, w01) = ((1.0 - t.tx) * (1.0 - t.ty), t.tx * (1.0 - t.ty));
        let (w10, w11) = ((1.0 - t.tx) * t.ty, t.tx * t.ty);
        for (ch, v) in row.iter_mut().enumerate() {
            let f = &fd[ch * plane..];
            *v = w00 * f[i00] + w01 * f[i00 + 1] + w10 * f[i00 + w] + w11 * f[i00 + w + 1];
        }
    }
    Ok(out)
}

/// Gradients of [`bilinear_sample`] with respect to the feature map and to
/// the point coordinates.
pub fn bilinear_backward(fm: &Tensor, points: &[Point01], dy: &Tensor) -> Result<(Tensor, Vec<[f64; 2]>)> {
    let (c, h, w) = check(fm)?;
    dy.expect_shape("bilinear_backward dy", &[points.len(), c])?;
    let fd = fm.data();
    let plane = h * w;
    let mut dfm = Tensor::zeros(fm.shape());
    let mut dpts = vec![[0.0; 2]; points.len()];
    let dfd = dfm.data_mut();
    for ((g, &p), dp) in dy.data().chunks_exact(c).zip(points).zip(dpts.iter_mut()) {
        let t = taps(p, h, w);
        let i00 = t.y0 * w + t.x0;
        let (w00, w01) = ((1.0 - t.tx) * (1.0 - t.ty), t.tx * (1.0 - t.ty));
        let (w10, w11) = ((1.0 - t.tx) * t.ty, t.tx * t.ty);
        let (mut gx, mut gy) = (0.0, 0.0);
        for (ch, &gv) in g.iter().enumerate() {
            if gv == 0.0 {
                continue;
            }
            let base = ch * plane + i00;
            dfd[base] += w00 * gv;
            dfd[base + 1] += w01 * gv;
            dfd[base + w] += w10 * gv;
            dfd[base + w + 1] += w11 * gv;
            let (f00, f01, f10, f11) = (fd[base], fd[base + 1], fd[base + w], fd[base + w + 1]);
            gx += gv * ((1.0 - t.ty) * (f01 - f00) + t.ty * (f11 - f10));
            gy += gv * ((1.0 - t.tx) * (f10 - f00) + t.tx * (f11 - f01));
        }
        *dp = [gx * t.sx, gy * t.sy];
    }
    Ok((dfm, dpts))
}
