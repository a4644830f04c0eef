//! Contour-based segmentation with a point renderer: a CNN + graph network
//! contour generator, a per-point classifier refining the mask along the
//! boundary, a synthetic shape dataset, training and evaluation.

pub mod check;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod generator;
pub mod geometry;
pub mod infer;
mod layers;
pub mod model;
pub mod numerics;
pub mod renderer;
pub mod train;

pub use checkpoint::Checkpoint;
pub use config::TrainConfig;
pub use error::{Error, Result};
pub use eval::{evaluate, CategoryTable, EvalMode, EvalReport};
pub use generator::{Generator, GeneratorConfig};
pub use geometry::{Contour, Mask, Point01};
pub use model::{ContourRend, LossParts, Prediction, RenderTargets, TrainExample};
pub use numerics::{AdamW, ParamStore, Tensor};
pub use renderer::{RendererConfig, TargetSource};
pub use train::{train, EpochMetrics, TrainOutcome, Trainer};
