//! Training configuration as `key = value` text. Command-line flags use the
//! same keys with `-` in place of `_`.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::generator::GeneratorConfig;
use crate::renderer::{RendererConfig, TargetSource};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    /// Multiplier applied to the learning rate every `lr_decay_every` epochs.
    pub lr_decay: f64,
    pub lr_decay_every: usize,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub generator: GeneratorConfig,
    pub renderer: RendererConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            lr_decay: 0.1,
            lr_decay_every: 10,
            weight_decay: 1e-5,
            batch_size: 8,
            epochs: 30,
            seed: 0,
            generator: GeneratorConfig::default(),
            renderer: RendererConfig::default(),
        }
    }
}

/// Every recognised key, in the order [`TrainConfig::to_text`] writes them.
pub const CONFIG_KEYS: &[&str] = &[
    "lr",
    "lr_decay",
    "lr_decay_every",
    "weight_decay",
    "batch_size",
    "epochs",
    "seed",
    "lambda",
    "image_size",
    "in_channels",
    "grid_size",
    "backbone_channels",
    "fused_channels",
    "k_vertices",
    "gcn_layers",
    "gcn_hidden",
    "refine_iterations",
    "branch_supervision",
    "train_samples",
    "offset_range",
    "grid_n",
    "square_s",
    "threshold",
    "render_targets",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config {
        key: key.to_string(),
        msg: format!("cannot parse `{value}`"),
    })
}

fn target_name(t: TargetSource) -> &'static str {
    match t {
        TargetSource::GroundTruth => "ground-truth",
        TargetSource::Predicted => "predicted",
    }
}

impl TrainConfig {
    /// Learning rate for `epoch`: `lr · lr_decay^⌊epoch / lr_decay_every⌋`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * self.lr_decay.powi((epoch / self.lr_decay_every.max(1)) as i32)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let g = &mut self.generator;
        let r = &mut self.renderer;
        match key {
            "lr" => self.lr = parse(key, value)?,
            "lr_decay" => self.lr_decay = parse(key, value)?,
            "lr_decay_every" => self.lr_decay_every = parse(key, value)?,
            "weight_decay" => self.weight_decay = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "lambda" => r.loss_weight = parse(key, value)?,
            "image_size" => g.image_size = parse(key, value)?,
            "in_channels" => g.in_channels = parse(key, value)?,
            "grid_size" => g.grid_size = parse(key, value)?,
            "backbone_channels" => g.backbone_channels = parse(key, value)?,
            "fused_channels" => g.fused_channels = parse(key, value)?,
            "k_vertices" => g.num_vertices = parse(key, value)?,
            "gcn_layers" => g.gcn_layers = parse(key, value)?,
            "gcn_hidden" => g.gcn_hidden = parse(key, value)?,
            "refine_iterations" => g.refine_iterations = parse(key, value)?,
            "branch_supervision" => g.branch_supervision = parse(key, value)?,
            "train_samples" => r.train_samples_per_vertex = parse(key, value)?,
            "offset_range" => r.train_offset_range = parse(key, value)?,
            "grid_n" => r.test_grid_side = parse(key, value)?,
            "square_s" => r.test_square_size = parse(key, value)?,
            "threshold" => r.fg_threshold = parse(key, value)?,
            "render_targets" => {
                r.target_source = match value {
                    "ground-truth" => TargetSource::GroundTruth,
                    "predicted" => TargetSource::Predicted,
                    _ => {
                        return Err(Error::Config {
                            key: key.into(),
                            msg: format!("expected `ground-truth` or `predicted`, got `{value}`"),
                        })
                    }
                }
            }
            _ => {
                return Err(Error::Config {
                    key: key.to_string(),
                    msg: "unknown key".into(),
                })
            }
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let g = &self.generator;
        let r = &self.renderer;
        Some(match key {
            "lr" => self.lr.to_string(),
            "lr_decay" => self.lr_decay.to_string(),
            "lr_decay_every" => self.lr_decay_every.to_string(),
            "weight_decay" => self.weight_decay.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "epochs" => self.epochs.to_string(),
            "seed" => self.seed.to_string(),
            "lambda" => r.loss_weight.to_string(),
            "image_size" => g.image_size.to_string(),
            "in_channels" => g.in_channels.to_string(),
            "grid_size" => g.grid_size.to_string(),
            "backbone_channels" => g.backbone_channels.to_string(),
            "fused_channels" => g.fused_channels.to_string(),
            "k_vertices" => g.num_vertices.to_string(),
            "gcn_layers" => g.gcn_layers.to_string(),
            "gcn_hidden" => g.gcn_hidden.to_string(),
            "refine_iterations" => g.refine_iterations.to_string(),
            "branch_supervision" => g.branch_supervision.to_string(),
            "train_samples" => r.train_samples_per_vertex.to_string(),
            "offset_range" => r.train_offset_range.to_string(),
            "grid_n" => r.test_grid_side.to_string(),
            "square_s" => r.test_square_size.to_string(),
            "threshold" => r.fg_threshold.to_string(),
            "render_targets" => target_name(r.target_source).to_string(),
            _ => return None,
        })
    }

    /// Parses `key = value` lines over the defaults. Blank lines and `#`
    /// comments are ignored.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                key: line.to_string(),
                msg: "expected `key = value`".into(),
            })?;
            cfg.set(key.trim(), value)?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    /// Loads `path` (if any), then applies `overrides` in order.
    pub fn parse_config(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        for (k, v) in overrides {
            cfg.set(&k.replace('-', "_"), v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Full snapshot, one `key = value` line per entry of [`CONFIG_KEYS`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in CONFIG_KEYS {
            let _ = writeln!(out, "{key} = {}", self.get(key).expect("known key"));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.lr.is_nan() || self.lr <= 0.0 {
            return Err(Error::Config {
                key: "lr".into(),
                msg: "must be positive".into(),
            });
        }
        if self.batch_size < 1 {
            return Err(Error::Config {
                key: "batch_size".into(),
                msg: "must be at least 1".into(),
            });
        }
        self.generator.validate()?;
        self.renderer.validate()
    }
}
