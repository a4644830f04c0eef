//! Procedural single-object images: one filled polygon near the image
//! center over a flat background, with pixel noise.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geometry::{rasterize_polygon, Contour, Mask, Point01};
use crate::numerics::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Category {
    Triangle,
    Rectangle,
    Ellipse,
    Star,
    Blob,
    Notched,
    LShape,
    RingCut,
}

impl Category {
    pub const ALL: [Category; 8] = [
        Category::Triangle,
        Category::Rectangle,
        Category::Ellipse,
        Category::Star,
        Category::Blob,
        Category::Notched,
        Category::LShape,
        Category::RingCut,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Category::Triangle => "triangle",
            Category::Rectangle => "rectangle",
            Category::Ellipse => "ellipse",
            Category::Star => "star",
            Category::Blob => "blob",
            Category::Notched => "notched",
            Category::LShape => "l-shape",
            Category::RingCut => "ring-cut",
        }
    }

    /// Column header used in evaluation tables.
    pub fn title(self) -> &'static str {
        match self {
            Category::Triangle => "Triangle",
            Category::Rectangle => "Rectangle",
            Category::Ellipse => "Ellipse",
            Category::Star => "Star",
            Category::Blob => "Blob",
            Category::Notched => "Notched",
            Category::LShape => "L-shape",
            Category::RingCut => "Ring-cut",
        }
    }

    pub fn is_convex(self) -> bool {
        matches!(self, Category::Triangle | Category::Rectangle | Category::Ellipse)
    }

    /// Categories whose outlines have deep concavities.
    pub fn is_concave(self) -> bool {
        matches!(
            self,
            Category::Star | Category::Notched | Category::LShape | Category::RingCut
        )
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Category::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown category `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub category: Category,
    /// `3×S×S`, values are multiples of 1/255.
    pub image: Tensor,
    /// Dense clockwise outline; coordinates lie on a 1e-9 grid.
    pub gt_contour: Contour,
    pub gt_mask: Mask,
}

pub const NOISE_SIGMA: f64 = 0.02;

fn polar(n: usize, radius: impl Fn(f64) -> f64) -> Vec<[f64; 2]> {
    (0..n)
        .map(|i| {
            let t = TAU * i as f64 / n as f64;
            let r = radius(t);
            [r * t.cos(), r * t.sin()]
        })
        .collect()
}

/// Outline in local coordinates of roughly unit radius, increasing angle
/// (clockwise on screen with y pointing down).
fn base_shape<R: Rng>(category: Category, rng: &mut R) -> Vec<[f64; 2]> {
    match category {
        Category::Triangle => (0..3)
            .map(|i| {
                let t = TAU * i as f64 / 3.0 + rng.random_range(-0.3..0.3);
                let r = rng.random_range(0.85..1.2);
                [r * t.cos(), r * t.sin()]
            })
            .collect(),
        Category::Rectangle => {
            let a = rng.random_range(0.6..1.1);
            let b = rng.random_range(0.4..0.9);
            vec![[-a, -b], [a, -b], [a, b], [-a, b]]
        }
        Category::Ellipse => {
            let a = rng.random_range(0.7..1.1);
            let b = rng.random_range(0.45..0.95);
            polar(48, |_| 1.0).into_iter().map(|[x, y]| [a * x, b * y]).collect()
        }
        Category::Star => {
            let arms = rng.random_range(5..=7);
            let inner = rng.random_range(0.5..0.65);
            polar(2 * arms, |t| {
                let i = (t / (PI / arms as f64)).round() as usize;
                if i.is_multiple_of(2) {
                    1.0
                } else {
                    inner
                }
            })
        }
        Category::Blob => {
            let terms: Vec<(f64, f64, f64)> = (2..=4)
                .map(|k| (k as f64, rng.random_range(-0.15..0.15), rng.random_range(0.0..TAU)))
                .collect();
            polar(48, |t| 1.0 + terms.iter().map(|(k, a, p)| a * (k * t + p).cos()).sum::<f64>())
        }
        Category::Notched => {
            let a = rng.random_range(0.7..1.0);
            let b = rng.random_range(0.55..0.85);
            let w = a * rng.random_range(0.25..0.45);
            let d = b * rng.random_range(0.6..1.0);
            vec![
                [-a, -b],
                [-w, -b],
                [-w, -b + d],
                [w, -b + d],
                [w, -b],
                [a, -b],
                [a, b],
                [-a, b],
            ]
        }
        Category::LShape => {
            let a = rng.random_range(0.7..1.0);
            let b = rng.random_range(0.7..1.0);
            let t = 2.0 * a * rng.random_range(0.38..0.55);
            let u = 2.0 * b * rng.random_range(0.38..0.55);
            vec![[-a, -b], [-a + t, -b], [-a + t, b - u], [a, b - u], [a, b], [-a, b]]
        }
        Category::RingCut => {
            let inner = rng.random_range(0.48..0.62);
            let gap = rng.random_range(0.3..0.5);
            let span = TAU - 2.0 * gap;
            let mut pts: Vec<[f64; 2]> = (0..=36)
                .map(|i| {
                    let t = gap + span * i as f64 / 36.0;
                    [t.cos(), t.sin()]
                })
                .collect();
            pts.extend((0..=24).map(|i| {
                let t = TAU - gap - span * i as f64 / 24.0;
                [inner * t.cos(), inner * t.sin()]
            }));
            pts
        }
    }
}

fn quantize_coord(v: f64) -> f64 {
    (v * 1e9).round() / 1e9
}

/// Subdivides every edge so consecutive points are at most `spacing` apart.
fn densify(pts: &[[f64; 2]], spacing: f64) -> Vec<[f64; 2]> {
    let n = pts.len();
    let mut out = Vec::new();
    for i in 0..n {
        let (a, b) = (pts[i], pts[(i + 1) % n]);
        let len = (b[0] - a[0]).hypot(b[1] - a[1]);
        let pieces = (len / spacing).ceil().max(1.0) as usize;
        for s in 0..pieces {
            let t = s as f64 / pieces as f64;
            out.push([a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t]);
        }
    }
    out
}

/// Places `local` at a random orientation and scale with its centroid near
/// the image center, densifies it and snaps it to the coordinate grid.
fn place<R: Rng>(local: &[[f64; 2]], rng: &mut R) -> Result<Contour> {
    let theta = rng.random_range(0.0..TAU);
    let (s, c) = theta.sin_cos();
    let scale = rng.random_range(0.22..0.36);
    let rotated: Vec<[f64; 2]> = local
        .iter()
        .map(|&[x, y]| [scale * (c * x - s * y), scale * (s * x + c * y)])
        .collect();
    let centroid = Contour::from_xy(&rotated)?.centroid();
    let target = Point01::new(0.5 + rng.random_range(-0.04..0.04), 0.5 + rng.random_range(-0.04..0.04));
    let mut pts: Vec<[f64; 2]> = rotated
        .iter()
        .map(|&[x, y]| [x - centroid.x + target.x, y - centroid.y + target.y])
        .collect();
    // shrink about the centroid until the outline clears the border
    let margin = 0.03;
    loop {
        let fits = pts
            .iter()
            .all(|&[x, y]| (margin..=1.0 - margin).contains(&x) && (margin..=1.0 - margin).contains(&y));
        if fits {
            break;
        }
        for p in pts.iter_mut() {
            p[0] = target.x + (p[0] - target.x) * 0.9;
            p[1] = target.y + (p[1] - target.y) * 0.9;
        }
    }
    let perimeter: f64 = (0..pts.len())
        .map(|i| {
            let (a, b) = (pts[i], pts[(i + 1) % pts.len()]);
            (b[0] - a[0]).hypot(b[1] - a[1])
        })
        .sum();
    let spacing = (perimeter / 96.0).min(0.015);
    let dense: Vec<[f64; 2]> = densify(&pts, spacing)
        .into_iter()
        .map(|[x, y]| [quantize_coord(x), quantize_coord(y)])
        .collect();
    Contour::from_xy(&dense)
}

/// Each channel uniform in `[lo, hi)`.
fn random_color<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> [f64; 3] {
    [rng.random_range(lo..hi), rng.random_range(lo..hi), rng.random_range(lo..hi)]
}

/// Deterministic sample for `seed`.
pub fn gen_sample(seed: u64, category: Category, size: usize) -> Result<Sample> {
    if size < 16 {
        return Err(Error::invalid(format!("gen_sample: image size must be at least 16, got {size}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let local = base_shape(category, &mut rng);
    let gt_contour = place(&local, &mut rng)?;
    let gt_mask = rasterize_polygon(&gt_contour, size, size)?;

    // objects are drawn from a brighter palette than the backdrop, so the
    // figure/ground side of an edge is visible locally
    let bg = random_color(&mut rng, 0.0, 0.55);
    let fg = loop {
        let c = random_color(&mut rng, 0.4, 1.0);
        let dist: f64 = c.iter().zip(&bg).map(|(a, b)| (a - b).abs()).sum();
        if dist >= 0.45 {
            break c;
        }
    };
    let noise = Normal::new(0.0, NOISE_SIGMA).expect("valid sigma");
    let plane = size * size;
    let mut data = vec![0.0; 3 * plane];
    for ch in 0..3 {
        for (i, &l) in gt_mask.labels().iter().enumerate() {
            let base = if l == 1 { fg[ch] } else { bg[ch] };
            let v = (base + noise.sample(&mut rng)).clamp(0.0, 1.0);
            data[ch * plane + i] = (v * 255.0).round() / 255.0;
        }
    }
    Ok(Sample {
        id: format!("{seed:016x}"),
        category,
        image: Tensor::from_vec(&[3, size, size], data)?,
        gt_contour,
        gt_mask,
    })
}
