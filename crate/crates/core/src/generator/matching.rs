use crate::error::{Error, Result};
use crate::geometry::Contour;

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub loss: f64,
    /// Index offset `j` of the best cyclic alignment; ties go to the smallest.
    pub shift: usize,
    /// d(loss)/d(pred vertex), `[dx, dy]` per vertex.
    pub grad: Vec<[f64; 2]>,
}

#[inline]
fn dist(ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
    let (dx, dy) = (ax - bx, ay - by);
    (dx * dx + dy * dy).sqrt()
}

/// Minimum over cyclic shifts `j` of `Σ_i ‖p_i − t_{(i+j) mod K}‖₂`.
///
/// The gradient follows the winning shift only. A coincident pair
/// contributes a zero subgradient.
pub fn matching_loss(pred: &Contour, target: &Contour) -> Result<MatchResult> {
    let k = pred.len();
    if target.len() != k {
        return Err(Error::ShapeMismatch {
            op: "matching_loss",
            left: vec![k, 2],
            right: vec![target.len(), 2],
        });
    }
    let (p, t) = (pred.vertices(), target.vertices());
    let mut best = (f64::INFINITY, 0usize);
    for j in 0..k {
        let mut sum = 0.0;
        for i in 0..k {
            let q = t[(i + j) % k];
            sum += dist(p[i].x, p[i].y, q.x, q.y);
        }
        if sum < best.0 {
            best = (sum, j);
        }
    }
    let (loss, shift) = best;
    let grad = (0..k)
        .map(|i| {
            let q = t[(i + shift) % k];
            let d = dist(p[i].x, p[i].y, q.x, q.y);
            if d > 0.0 {
                [(p[i].x - q.x) / d, (p[i].y - q.y) / d]
            } else {
                [0.0, 0.0]
            }
        })
        .collect();
    Ok(MatchResult { loss, shift, grad })
}
