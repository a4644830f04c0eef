//! Per-category IoU reports for contour-only and rendered masks.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::data::{Category, Sample};
use crate::error::{Error, Result};
use crate::geometry::{mask_iou, rasterize_polygon, Contour};
use crate::model::{ContourRend, Prediction};
use crate::numerics::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    ContourOnly,
    Rendered,
}

impl EvalMode {
    pub fn label(self) -> &'static str {
        match self {
            EvalMode::ContourOnly => "contour-only",
            EvalMode::Rendered => "rendered",
        }
    }
}

/// Mean IoU per category (in [`Category::ALL`] order) and their average.
/// Categories absent from the evaluated split are `None` and left out of
/// the mean.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryTable {
    pub per_category: [Option<f64>; 8],
    pub counts: [usize; 8],
    pub mean: f64,
}

impl CategoryTable {
    /// Builds the table from `(category, iou)` pairs, summing in input order.
    pub fn from_scores(scores: impl IntoIterator<Item = (Category, f64)>) -> Result<Self> {
        let mut sums = [0.0; 8];
        let mut counts = [0usize; 8];
        for (c, iou) in scores {
            sums[c.index()] += iou;
            counts[c.index()] += 1;
        }
        if counts.iter().all(|&n| n == 0) {
            return Err(Error::EmptySplit);
        }
        let mut per_category = [None; 8];
        for i in 0..8 {
            if counts[i] > 0 {
                per_category[i] = Some(sums[i] / counts[i] as f64);
            }
        }
        let present: Vec<f64> = per_category.iter().flatten().copied().collect();
        let mean = present.iter().sum::<f64>() / present.len() as f64;
        Ok(Self {
            per_category,
            counts,
            mean,
        })
    }

    pub fn get(&self, c: Category) -> Option<f64> {
        self.per_category[c.index()]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub contour_only: CategoryTable,
    pub rendered: CategoryTable,
    pub samples: usize,
}

impl EvalReport {
    pub fn table(&self, mode: EvalMode) -> &CategoryTable {
        match mode {
            EvalMode::ContourOnly => &self.contour_only,
            EvalMode::Rendered => &self.rendered,
        }
    }

    /// CSV with one row per mode: `mode,<8 categories>,mean`. Missing
    /// categories are left empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("mode");
        for c in Category::ALL {
            out.push(',');
            out.push_str(c.name());
        }
        out.push_str(",mean\n");
        for mode in [EvalMode::ContourOnly, EvalMode::Rendered] {
            let t = self.table(mode);
            out.push_str(mode.label());
            for v in t.per_category {
                out.push(',');
                if let Some(v) = v {
                    let _ = write!(out, "{v}");
                }
            }
            let _ = writeln!(out, ",{}", t.mean);
        }
        out
    }

    /// Fixed-width table with IoU in percent, for the terminal.
    pub fn to_table(&self) -> String {
        let mut out = format!("{:<14}", "Model");
        for c in Category::ALL {
            let _ = write!(out, "{:>10}", c.title());
        }
        let _ = writeln!(out, "{:>10}", "Mean");
        for mode in [EvalMode::ContourOnly, EvalMode::Rendered] {
            let t = self.table(mode);
            let _ = write!(out, "{:<14}", mode.label());
            for v in t.per_category {
                match v {
                    Some(v) => {
                        let _ = write!(out, "{:>10.2}", 100.0 * v);
                    }
                    None => {
                        let _ = write!(out, "{:>10}", "-");
                    }
                }
            }
            let _ = writeln!(out, "{:>10.2}", 100.0 * t.mean);
        }
        out
    }
}

/// IoU of the contour-only and rendered masks of `pred` against `sample`.
pub fn score_prediction(pred: &Prediction, sample: &Sample) -> Result<(f64, f64)> {
    Ok((
        mask_iou(&pred.contour_mask, &sample.gt_mask)?,
        mask_iou(&pred.rendered_mask, &sample.gt_mask)?,
    ))
}

pub fn evaluate(model: &ContourRend, params: &ParamStore, samples: &[Sample]) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::EmptySplit);
    }
    let s = model.generator().config().image_size;
    if let Some(bad) = samples.iter().find(|x| x.gt_mask.height() != s || x.gt_mask.width() != s) {
        return Err(Error::invalid(format!(
            "sample {} is {}x{} but the model expects {s}x{s}",
            bad.id,
            bad.gt_mask.width(),
            bad.gt_mask.height()
        )));
    }
    let scores: Vec<(f64, f64)> = samples
        .par_iter()
        .map(|x| score_prediction(&model.predict(params, &x.image)?, x))
        .collect::<Result<_>>()?;
    Ok(EvalReport {
        contour_only: CategoryTable::from_scores(samples.iter().zip(&scores).map(|(x, s)| (x.category, s.0)))?,
        rendered: CategoryTable::from_scores(samples.iter().zip(&scores).map(|(x, s)| (x.category, s.1)))?,
        samples: samples.len(),
    })
}

/// Contour-only table for externally supplied contours, e.g. the ground
/// truth fed back as predictions.
pub fn evaluate_contours<F>(samples: &[Sample], contour_for: F) -> Result<CategoryTable>
where
    F: Fn(&Sample) -> Result<Contour> + Sync,
{
    if samples.is_empty() {
        return Err(Error::EmptySplit);
    }
    let scores: Vec<f64> = samples
        .par_iter()
        .map(|x| {
            let c = contour_for(x)?;
            mask_iou(&rasterize_polygon(&c, x.gt_mask.height(), x.gt_mask.width())?, &x.gt_mask)
        })
        .collect::<Result<_>>()?;
    CategoryTable::from_scores(samples.iter().map(|x| x.category).zip(scores))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_is_category_average() {
        let scores = Category::ALL.iter().enumerate().flat_map(|(i, &c)| {
            (0..=i).map(move |j| (c, (i * 7 + j) as f64 / 100.0))
        });
        let t = CategoryTable::from_scores(scores).unwrap();
        let avg = t.per_category.iter().map(|v| v.unwrap()).sum::<f64>() / 8.0;
        assert!((t.mean - avg).abs() < 1e-12);
        assert_eq!(t.counts[7], 8);
    }

    #[test]
    fn missing_categories_are_skipped() {
        let t = CategoryTable::from_scores([(Category::ALL[0], 0.5), (Category::ALL[2], 1.0)]).unwrap();
        assert_eq!(t.per_category[1], None);
        assert_eq!(t.mean, 0.75);
        assert!(matches!(CategoryTable::from_scores([]), Err(Error::EmptySplit)));
    }

    #[test]
    fn csv_layout() {
        let t = CategoryTable::from_scores(Category::ALL.iter().map(|&c| (c, 0.5))).unwrap();
        let r = EvalReport {
            contour_only: t.clone(),
            rendered: t,
            samples: 8,
        };
        let csv = r.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0].split(',').count(), 10);
        assert!(lines[0].ends_with(",mean"));
        assert!(lines[1].starts_with("contour-only,0.5,"));
        assert!(r.to_table().contains("Mean"));
    }
}
