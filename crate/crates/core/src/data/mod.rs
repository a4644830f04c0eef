//! Synthetic single-object dataset, its serialization, and image file I/O.

mod dataset;
mod pnm;
mod synth;

pub use dataset::{
    generate_dataset, generate_split, read_dataset, sample_seed, write_dataset, DatasetSplit, SplitCounts, SplitKind,
};
pub use pnm::{
    decode_pgm, decode_ppm, encode_pgm, encode_ppm, read_image_ppm, read_mask_pgm, write_image_ppm, write_mask_pgm,
};
pub(crate) use dataset::mix;
pub use synth::{gen_sample, Category, Sample, NOISE_SIGMA};
