//! Train/val/test splits and their on-disk form: a JSON-lines index per
//! split plus one PPM image per sample.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pnm::{read_image_ppm, write_image_ppm};
use super::synth::{gen_sample, Category, Sample};
use crate::error::{Error, Result};
use crate::geometry::{rasterize_polygon, Contour};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitKind {
    Train,
    Val,
    Test,
}

impl SplitKind {
    pub const ALL: [SplitKind; 3] = [SplitKind::Train, SplitKind::Val, SplitKind::Test];

    pub fn name(self) -> &'static str {
        match self {
            SplitKind::Train => "train",
            SplitKind::Val => "val",
            SplitKind::Test => "test",
        }
    }

    fn tag(self) -> u64 {
        self as u64 + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for SplitCounts {
    fn default() -> Self {
        Self {
            train: 500,
            val: 100,
            test: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub seed: u64,
    pub image_size: usize,
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl DatasetSplit {
    pub fn split(&self, kind: SplitKind) -> &[Sample] {
        match kind {
            SplitKind::Train => &self.train,
            SplitKind::Val => &self.val,
            SplitKind::Test => &self.test,
        }
    }

    fn split_mut(&mut self, kind: SplitKind) -> &mut Vec<Sample> {
        match kind {
            SplitKind::Train => &mut self.train,
            SplitKind::Val => &mut self.val,
            SplitKind::Test => &mut self.test,
        }
    }

    pub fn counts(&self) -> SplitCounts {
        SplitCounts {
            train: self.train.len(),
            val: self.val.len(),
            test: self.test.len(),
        }
    }
}

/// SplitMix64 finalizer.
pub(crate) fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of sample `index` in `kind`; distinct splits draw from distinct streams.
pub fn sample_seed(seed: u64, kind: SplitKind, index: usize) -> u64 {
    mix(mix(seed ^ kind.tag().rotate_left(56)) ^ index as u64)
}

/// Category-balanced split: sample `i` has category `i mod 8`.
pub fn generate_split(seed: u64, kind: SplitKind, count: usize, image_size: usize) -> Result<Vec<Sample>> {
    (0..count)
        .into_par_iter()
        .map(|i| {
            let category = Category::ALL[i % Category::ALL.len()];
            let mut s = gen_sample(sample_seed(seed, kind, i), category, image_size)?;
            s.id = format!("{}-{i:05}", kind.name());
            Ok(s)
        })
        .collect()
}

pub fn generate_dataset(seed: u64, image_size: usize, counts: SplitCounts) -> Result<DatasetSplit> {
    Ok(DatasetSplit {
        seed,
        image_size,
        train: generate_split(seed, SplitKind::Train, counts.train, image_size)?,
        val: generate_split(seed, SplitKind::Val, counts.val, image_size)?,
        test: generate_split(seed, SplitKind::Test, counts.test, image_size)?,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    seed: u64,
    image_size: usize,
    counts: SplitCounts,
}

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    id: String,
    category: String,
    image_file: String,
    contour: Vec<[f64; 2]>,
}

const META_FILE: &str = "meta.json";
const IMAGE_DIR: &str = "images";

fn index_path(dir: &Path, kind: SplitKind) -> PathBuf {
    dir.join(format!("{}.jsonl", kind.name()))
}

pub fn write_dataset(split: &DatasetSplit, dir: &Path) -> Result<()> {
    let images = dir.join(IMAGE_DIR);
    fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    let meta = Meta {
        seed: split.seed,
        image_size: split.image_size,
        counts: split.counts(),
    };
    let meta_path = dir.join(META_FILE);
    let json = serde_json::to_string_pretty(&meta).expect("meta serializes");
    fs::write(&meta_path, json + "\n").map_err(|e| Error::io(&meta_path, e))?;
    for kind in SplitKind::ALL {
        let path = index_path(dir, kind);
        let mut out = Vec::new();
        for s in split.split(kind) {
            let image_file = format!("{IMAGE_DIR}/{}.ppm", s.id);
            write_image_ppm(&s.image, &dir.join(&image_file))?;
            let rec = Record {
                id: s.id.clone(),
                category: s.category.name().to_string(),
                image_file,
                contour: s.gt_contour.to_xy(),
            };
            serde_json::to_writer(&mut out, &rec).expect("record serializes");
            out.push(b'\n');
        }
        let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        f.write_all(&out).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

fn read_index(dir: &Path, kind: SplitKind, image_size: usize) -> Result<Vec<Sample>> {
    let path = index_path(dir, kind);
    let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
    let mut samples = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            path: path.clone(),
            line: n + 1,
            msg,
        };
        let rec: Record = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let category: Category = rec.category.parse().map_err(|e: Error| parse_err(e.to_string()))?;
        let gt_contour = Contour::from_xy(&rec.contour).map_err(|e| parse_err(e.to_string()))?;
        let image = read_image_ppm(&dir.join(&rec.image_file))?;
        if image.shape() != [3, image_size, image_size] {
            return Err(parse_err(format!(
                "image {} has shape {:?}, expected 3×{image_size}×{image_size}",
                rec.image_file,
                image.shape()
            )));
        }
        let gt_mask = rasterize_polygon(&gt_contour, image_size, image_size)?;
        samples.push(Sample {
            id: rec.id,
            category,
            image,
            gt_contour,
            gt_mask,
        });
    }
    Ok(samples)
}

pub fn read_dataset(dir: &Path) -> Result<DatasetSplit> {
    let meta_path = dir.join(META_FILE);
    let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: Meta = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: meta_path.clone(),
        line: e.line(),
        msg: e.to_string(),
    })?;
    let mut split = DatasetSplit {
        seed: meta.seed,
        image_size: meta.image_size,
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for kind in SplitKind::ALL {
        *split.split_mut(kind) = read_index(dir, kind, meta.image_size)?;
    }
    if split.counts() != meta.counts {
        return Err(Error::Format {
            path: meta_path,
            msg: format!("record counts {:?} do not match {:?}", split.counts(), meta.counts),
        });
    }
    Ok(split)
}
