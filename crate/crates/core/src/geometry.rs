//! Contour and mask geometry in normalized image coordinates (x right, y down).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point01 {
    pub x: f64,
    pub y: f64,
}

impl Point01 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn clamped(self) -> Self {
        Self::new(self.x.clamp(0.0, 1.0), self.y.clamp(0.0, 1.0))
    }

    pub fn distance(self, other: Point01) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    fn lerp(self, other: Point01, t: f64) -> Self {
        Self::new(self.x + (other.x - self.x) * t, self.y + (other.y - self.y) * t)
    }
}

/// Closed polygon given by its ordered vertices (at least three).
///
/// Generated and resampled contours are clockwise in image coordinates,
/// i.e. [`signed_area`] is positive; predicted contours may be arbitrary.
#[derive(Debug, Clone, PartialEq)]
pub struct Contour {
    vertices: Vec<Point01>,
}

impl Contour {
    pub fn new(vertices: Vec<Point01>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::invalid(format!(
                "contour needs at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if vertices.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::NonFinite("contour vertex".into()));
        }
        Ok(Self { vertices })
    }

    pub fn from_xy(coords: &[[f64; 2]]) -> Result<Self> {
        Self::new(coords.iter().map(|&[x, y]| Point01::new(x, y)).collect())
    }

    pub fn vertices(&self) -> &[Point01] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn to_xy(&self) -> Vec<[f64; 2]> {
        self.vertices.iter().map(|p| [p.x, p.y]).collect()
    }

    /// Iterator over the closed polygon's edges `(v_i, v_{i+1 mod K})`.
    pub fn edges(&self) -> impl Iterator<Item = (Point01, Point01)> + '_ {
        let k = self.vertices.len();
        (0..k).map(move |i| (self.vertices[i], self.vertices[(i + 1) % k]))
    }

    pub fn perimeter(&self) -> f64 {
        self.edges().map(|(a, b)| a.distance(b)).sum()
    }

    /// Same cycle starting at vertex `j`: output vertex `i` is input `(i + j) mod K`.
    pub fn rotated(&self, j: usize) -> Self {
        let k = self.vertices.len();
        Self {
            vertices: (0..k).map(|i| self.vertices[(i + j) % k]).collect(),
        }
    }

    pub fn reversed(&self) -> Self {
        let mut vertices = self.vertices.clone();
        vertices.reverse();
        Self { vertices }
    }

    /// Area-weighted centroid; falls back to the vertex mean for degenerate polygons.
    pub fn centroid(&self) -> Point01 {
        let (mut a, mut cx, mut cy) = (0.0, 0.0, 0.0);
        for (p, q) in self.edges() {
            let cross = p.x * q.y - q.x * p.y;
            a += cross;
            cx += (p.x + q.x) * cross;
            cy += (p.y + q.y) * cross;
        }
        if a.abs() < 1e-15 {
            let n = self.vertices.len() as f64;
            let (sx, sy) = self.vertices.iter().fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
            return Point01::new(sx / n, sy / n);
        }
        Point01::new(cx / (3.0 * a), cy / (3.0 * a))
    }
}

/// Binary label grid, row-major, `0` background and `1` foreground.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    height: usize,
    width: usize,
    labels: Vec<u8>,
}

impl Mask {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            labels: vec![0; height * width],
        }
    }

    pub fn from_labels(height: usize, width: usize, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != height * width {
            return Err(Error::ShapeMismatch {
                op: "mask",
                left: vec![height, width],
                right: vec![labels.len()],
            });
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::invalid("mask labels must be 0 or 1"));
        }
        Ok(Self { height, width, labels })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.labels[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, label: u8) {
        self.labels[row * self.width + col] = label.min(1);
    }

    pub fn count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }
}

/// `½ Σ (x_i·y_{i+1} − x_{i+1}·y_i)`; positive means clockwise on screen.
pub fn signed_area(c: &Contour) -> f64 {
    0.5 * c.edges().map(|(p, q)| p.x * q.y - q.x * p.y).sum::<f64>()
}

/// `K` points at equal arc-length spacing along the closed polyline,
/// starting at vertex 0 and following the input order.
pub fn resample_contour(c: &Contour, k: usize) -> Result<Contour> {
    if k < 3 {
        return Err(Error::invalid(format!("resample_contour: K must be at least 3, got {k}")));
    }
    let seg: Vec<f64> = c.edges().map(|(a, b)| a.distance(b)).collect();
    let perimeter: f64 = seg.iter().sum();
    if perimeter.is_nan() || perimeter <= 0.0 {
        return Err(Error::invalid("resample_contour: contour has zero perimeter"));
    }
    let verts = c.vertices();
    let step = perimeter / k as f64;
    let mut out = Vec::with_capacity(k);
    let (mut edge, mut start) = (0usize, 0.0f64);
    for i in 0..k {
        let target = step * i as f64;
        while edge + 1 < seg.len() && start + seg[edge] <= target {
            start += seg[edge];
            edge += 1;
        }
        let a = verts[edge];
        let b = verts[(edge + 1) % verts.len()];
        let t = if seg[edge] > 0.0 {
            ((target - start) / seg[edge]).clamp(0.0, 1.0)
        } else {
            0.0
        };
        out.push(a.lerp(b, t));
    }
    Contour::new(out)
}

/// Even-odd containment by a ray towards +x. An edge counts when exactly one
/// endpoint lies strictly below the ray (`y > pt.y`, image coordinates).
pub fn point_in_polygon(pt: Point01, c: &Contour) -> bool {
    let mut inside = false;
    for (a, b) in c.edges() {
        if (a.y > pt.y) != (b.y > pt.y) && pt.x < edge_crossing_x(a, b, pt.y) {
            inside = !inside;
        }
    }
    inside
}

#[inline]
fn edge_crossing_x(a: Point01, b: Point01, y: f64) -> f64 {
    a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y)
}

#[inline]
pub(crate) fn pixel_center(index: usize, extent: usize) -> f64 {
    (index as f64 + 0.5) / extent as f64
}

/// Scanline even-odd fill sampling pixel centers `((col + 0.5)/W, (row + 0.5)/H)`.
///
/// Produces exactly the same mask as testing every pixel center with
/// [`point_in_polygon`].
pub fn rasterize_polygon(c: &Contour, height: usize, width: usize) -> Result<Mask> {
    if height < 1 || width < 1 {
        return Err(Error::invalid(format!("rasterize_polygon: bad size {height}×{width}")));
    }
    let mut mask = Mask::new(height, width);
    let mut xs: Vec<f64> = Vec::with_capacity(16);
    for row in 0..height {
        let cy = pixel_center(row, height);
        xs.clear();
        for (a, b) in c.edges() {
            if (a.y > cy) != (b.y > cy) {
                xs.push(edge_crossing_x(a, b, cy));
            }
        }
        xs.sort_by(f64::total_cmp);
        // with crossings sorted, a center is inside iff x[2i] <= cx < x[2i+1]
        for pair in xs.chunks_exact(2) {
            let (lo, hi) = (pair[0], pair[1]);
            let first = ((lo * width as f64 - 0.5).floor().max(0.0) as usize).min(width);
            let last = ((hi * width as f64 - 0.5).ceil().max(0.0) as usize + 1).min(width);
            for col in first..last {
                let cx = pixel_center(col, width);
                if lo <= cx && cx < hi {
                    mask.labels[row * width + col] = 1;
                }
            }
        }
    }
    Ok(mask)
}

/// `|a ∧ b| / |a ∨ b|`, defined as 1 when both masks are empty.
pub fn mask_iou(a: &Mask, b: &Mask) -> Result<f64> {
    if a.height != b.height || a.width != b.width {
        return Err(Error::ShapeMismatch {
            op: "mask_iou",
            left: vec![a.height, a.width],
            right: vec![b.height, b.width],
        });
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.labels.iter().zip(&b.labels) {
        inter += (x & y) as usize;
        union += (x | y) as usize;
    }
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

pub const INITIAL_RADIUS: f64 = 0.35;

/// Circle of radius 0.35 about the image center, clockwise from the top.
pub fn initial_contour(k: usize) -> Result<Contour> {
    if k < 3 {
        return Err(Error::invalid(format!("initial_contour: K must be at least 3, got {k}")));
    }
    let vertices = (0..k)
        .map(|i| {
            let theta = std::f64::consts::TAU * i as f64 / k as f64;
            Point01::new(0.5 + INITIAL_RADIUS * theta.sin(), 0.5 - INITIAL_RADIUS * theta.cos())
        })
        .collect();
    Contour::new(vertices)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square() -> Contour {
        Contour::from_xy(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]).unwrap()
    }

    fn close(a: Point01, b: Point01, tol: f64) -> bool {
        (a.x - b.x).abs() <= tol && (a.y - b.y).abs() <= tol
    }

    #[test]
    fn signed_area_examples() {
        assert_eq!(signed_area(&unit_square()), 1.0);
        assert_eq!(signed_area(&unit_square().reversed()), -1.0);
        let line = Contour::from_xy(&[[0.0, 0.0], [0.5, 0.5], [1.0, 1.0]]).unwrap();
        assert_eq!(signed_area(&line), 0.0);
    }

    #[test]
    fn too_few_vertices() {
        assert!(Contour::from_xy(&[[0.0, 0.0], [1.0, 1.0]]).is_err());
    }

    #[test]
    fn resample_square_corners_and_midpoints() {
        let four = resample_contour(&unit_square(), 4).unwrap();
        assert_eq!(four, unit_square());
        let eight = resample_contour(&unit_square(), 8).unwrap();
        let expected = [
            [0.0, 0.0],
            [0.5, 0.0],
            [1.0, 0.0],
            [1.0, 0.5],
            [1.0, 1.0],
            [0.5, 1.0],
            [0.0, 1.0],
            [0.0, 0.5],
        ];
        for (p, e) in eight.vertices().iter().zip(expected) {
            assert!(close(*p, Point01::new(e[0], e[1]), 1e-12), "{p:?} vs {e:?}");
        }
    }

    #[test]
    fn resample_fixed_point() {
        let c = initial_contour(24).unwrap();
        let r = resample_contour(&c, 24).unwrap();
        for (a, b) in c.vertices().iter().zip(r.vertices()) {
            assert!(close(*a, *b, 1e-12));
        }
    }

    #[test]
    fn resample_zero_perimeter_errors() {
        let dot = Contour::from_xy(&[[0.3, 0.3], [0.3, 0.3], [0.3, 0.3]]).unwrap();
        assert!(resample_contour(&dot, 5).is_err());
    }

    #[test]
    fn raster_full_cover() {
        let big = Contour::from_xy(&[[-0.1, -0.1], [1.1, -0.1], [1.1, 1.1], [-0.1, 1.1]]).unwrap();
        let m = rasterize_polygon(&big, 4, 4).unwrap();
        assert_eq!(m.count(), 16);
    }

    #[test]
    fn raster_center_block() {
        let sq = Contour::from_xy(&[[0.25, 0.25], [0.75, 0.25], [0.75, 0.75], [0.25, 0.75]]).unwrap();
        let m = rasterize_polygon(&sq, 8, 8).unwrap();
        for r in 0..8 {
            for c in 0..8 {
                let expect = (2..=5).contains(&r) && (2..=5).contains(&c);
                assert_eq!(m.get(r, c) == 1, expect, "pixel ({r}, {c})");
            }
        }
    }

    #[test]
    fn raster_rejects_empty_size() {
        assert!(rasterize_polygon(&unit_square(), 0, 4).is_err());
    }

    #[test]
    fn pip_examples() {
        let tri = Contour::from_xy(&[[0.2, 0.2], [0.8, 0.3], [0.4, 0.9]]).unwrap();
        assert!(point_in_polygon(tri.centroid(), &tri));
        let shrunk = Contour::from_xy(&[[0.2, 0.2], [0.8, 0.2], [0.8, 0.8], [0.2, 0.8]]).unwrap();
        assert!(!point_in_polygon(Point01::new(-0.1, 0.5).clamped(), &shrunk));
    }

    #[test]
    fn iou_examples() {
        let mut a = Mask::new(3, 5);
        let mut b = Mask::new(3, 5);
        assert_eq!(mask_iou(&a, &b).unwrap(), 1.0);
        for c in 0..5 {
            a.set(0, c, 1);
            a.set(1, c, 1);
            b.set(1, c, 1);
            b.set(2, c, 1);
        }
        assert!((mask_iou(&a, &b).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(mask_iou(&a, &a).unwrap(), 1.0);
        let mut top = Mask::new(3, 5);
        top.set(0, 0, 1);
        let mut bottom = Mask::new(3, 5);
        bottom.set(2, 4, 1);
        assert_eq!(mask_iou(&top, &bottom).unwrap(), 0.0);
        assert!(mask_iou(&a, &Mask::new(4, 5)).is_err());
    }

    #[test]
    fn initial_contour_examples() {
        let c = initial_contour(4).unwrap();
        let expected = [[0.5, 0.15], [0.85, 0.5], [0.5, 0.85], [0.15, 0.5]];
        for (p, e) in c.vertices().iter().zip(expected) {
            assert!(close(*p, Point01::new(e[0], e[1]), 1e-12));
        }
        for k in [3, 7, 20, 60] {
            let c = initial_contour(k).unwrap();
            assert!(signed_area(&c) > 0.0);
            for p in c.vertices() {
                assert!((p.distance(Point01::new(0.5, 0.5)) - INITIAL_RADIUS).abs() < 1e-12);
            }
        }
        assert!(initial_contour(2).is_err());
    }
}
