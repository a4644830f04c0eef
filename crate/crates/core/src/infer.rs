//! Single-image inference and its on-disk artifacts.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{read_image_ppm, write_image_ppm, write_mask_pgm};
use crate::error::{Error, Result};
use crate::geometry::Point01;
use crate::model::{ContourRend, Prediction};
use crate::numerics::{ParamStore, Tensor};

/// Contents of `contour.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourRecord {
    pub contour: Vec<[f64; 2]>,
    pub points: Vec<[f64; 2]>,
    pub fg_probs: Vec<f64>,
    pub threshold: f64,
}

#[derive(Debug, Clone)]
pub struct InferArtifacts {
    pub contour_json: PathBuf,
    pub contour_mask: PathBuf,
    pub rendered_mask: PathBuf,
    pub overlay: PathBuf,
    pub prediction: Prediction,
}

const VERTEX: [f64; 3] = [0.0, 0.0, 1.0];
const FOREGROUND: [f64; 3] = [0.0, 1.0, 0.0];
const BACKGROUND: [f64; 3] = [1.0, 0.0, 0.0];

fn paint(img: &mut Tensor, p: Point01, rgb: [f64; 3]) {
    let (h, w) = (img.dim(1), img.dim(2));
    let p = p.clamped();
    let col = (p.x * (w - 1) as f64).round() as usize;
    let row = (p.y * (h - 1) as f64).round() as usize;
    for (c, v) in rgb.into_iter().enumerate() {
        img.data_mut()[(c * h + row) * w + col] = v;
    }
}

/// The input with render points (green foreground, red background) and
/// contour vertices (blue) drawn on top.
pub fn point_overlay(image: &Tensor, pred: &Prediction, threshold: f64) -> Tensor {
    let mut img = image.clone();
    for (&p, &prob) in pred.points.iter().zip(&pred.fg_probs) {
        paint(&mut img, p, if prob > threshold { FOREGROUND } else { BACKGROUND });
    }
    for &v in pred.contour.vertices() {
        paint(&mut img, v, VERTEX);
    }
    img
}

/// Predicts on the PPM at `image_path` and writes `contour.json`,
/// `contour_mask.pgm`, `rendered_mask.pgm` and `points.ppm` into `out_dir`.
pub fn infer(model: &ContourRend, params: &ParamStore, image_path: &Path, out_dir: &Path) -> Result<InferArtifacts> {
    let image = read_image_ppm(image_path)?;
    let s = model.generator().config().image_size;
    if image.dim(1) != s || image.dim(2) != s {
        return Err(Error::Format {
            path: image_path.to_path_buf(),
            msg: format!("image is {}x{} but the model expects {s}x{s}", image.dim(2), image.dim(1)),
        });
    }
    let pred = model.predict(params, &image)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let threshold = model.renderer_config().fg_threshold;
    let record = ContourRecord {
        contour: pred.contour.to_xy(),
        points: pred.points.iter().map(|p| [p.x, p.y]).collect(),
        fg_probs: pred.fg_probs.clone(),
        threshold,
    };
    let contour_json = out_dir.join("contour.json");
    let json = serde_json::to_string_pretty(&record).map_err(|e| Error::invalid(e.to_string()))?;
    std::fs::write(&contour_json, json).map_err(|e| Error::io(&contour_json, e))?;
    let contour_mask = out_dir.join("contour_mask.pgm");
    write_mask_pgm(&pred.contour_mask, &contour_mask)?;
    let rendered_mask = out_dir.join("rendered_mask.pgm");
    write_mask_pgm(&pred.rendered_mask, &rendered_mask)?;
    let overlay = out_dir.join("points.ppm");
    write_image_ppm(&point_overlay(&image, &pred, threshold), &overlay)?;
    Ok(InferArtifacts {
        contour_json,
        contour_mask,
        rendered_mask,
        overlay,
        prediction: pred,
    })
}
