//! Mini-batch training: category-balanced epochs, per-sample gradients in
//! parallel summed in sample order, AdamW with step learning-rate decay.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::checkpoint::Checkpoint;
use crate::config::TrainConfig;
use crate::data::{mix, Sample};
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::model::{ContourRend, LossParts, TrainExample};
use crate::numerics::{AdamW, Gradients, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean matching loss over the epoch's training samples.
    pub loss_match: f64,
    pub loss_render: f64,
    /// `None` when no validation samples were given.
    pub val_miou_contour: Option<f64>,
    pub val_miou_rendered: Option<f64>,
}

pub const METRICS_HEADER: &str = "epoch,loss_match,loss_render,val_miou_contour,val_miou_rendered";

pub fn metrics_csv(rows: &[EpochMetrics]) -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.epoch,
            r.loss_match,
            r.loss_render,
            opt(r.val_miou_contour),
            opt(r.val_miou_rendered)
        );
    }
    out
}

pub fn write_metrics_csv(rows: &[EpochMetrics], path: &Path) -> Result<()> {
    std::fs::write(path, metrics_csv(rows)).map_err(|e| Error::io(path, e))
}

/// Visiting order for one epoch: each category's samples are shuffled, then
/// categories are interleaved round-robin so every batch mixes classes.
pub fn balanced_order(samples: &[Sample], seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed ^ mix(epoch as u64 + 1)));
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); 8];
    for (i, s) in samples.iter().enumerate() {
        groups[s.category.index()].push(i);
    }
    for g in &mut groups {
        g.shuffle(&mut rng);
    }
    let longest = groups.iter().map(Vec::len).max().unwrap_or(0);
    let mut order = Vec::with_capacity(samples.len());
    for round in 0..longest {
        for g in &groups {
            if let Some(&i) = g.get(round) {
                order.push(i);
            }
        }
    }
    order
}

fn point_seed(seed: u64, epoch: usize, position: usize) -> u64 {
    mix(mix(seed ^ 0x05EE_D0F9_01A7) ^ mix(((epoch as u64) << 32) | position as u64))
}

pub struct Trainer<'a> {
    pub config: TrainConfig,
    pub model: ContourRend,
    pub params: ParamStore,
    pub optimizer: AdamW,
    pub epoch: usize,
    train: &'a [Sample],
    examples: Vec<TrainExample<'a>>,
    pool: Vec<Gradients>,
}

impl<'a> Trainer<'a> {
    pub fn new(config: TrainConfig, train: &'a [Sample]) -> Result<Self> {
        config.validate()?;
        if train.is_empty() {
            return Err(Error::EmptySplit);
        }
        let (model, params) = ContourRend::init(config.generator.clone(), config.renderer.clone(), config.seed)?;
        let optimizer = AdamW::new(&params, config.lr, config.weight_decay);
        Self::assemble(config, model, params, optimizer, 0, train)
    }

    /// Resumes from a checkpoint, using its config and optimizer state.
    pub fn resume(ck: Checkpoint, train: &'a [Sample]) -> Result<Self> {
        let model = ContourRend::bind(ck.config.generator.clone(), ck.config.renderer.clone(), &ck.params)?;
        Self::assemble(ck.config, model, ck.params, ck.optimizer, ck.epoch as usize, train)
    }

    fn assemble(
        config: TrainConfig,
        model: ContourRend,
        params: ParamStore,
        optimizer: AdamW,
        epoch: usize,
        train: &'a [Sample],
    ) -> Result<Self> {
        let s = config.generator.image_size;
        let k = config.generator.num_vertices;
        let examples = train
            .iter()
            .map(|x| {
                if x.gt_mask.height() != s || x.gt_mask.width() != s {
                    return Err(Error::invalid(format!("sample {} does not match image_size {s}", x.id)));
                }
                TrainExample::new(x, k)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config,
            model,
            params,
            optimizer,
            epoch,
            train,
            examples,
            pool: Vec::new(),
        })
    }

    /// One optimizer step on the examples at `batch` (indices into the
    /// training set). Returns the per-sample loss parts in batch order.
    pub fn step(&mut self, batch: &[usize], seeds: &[u64]) -> Result<Vec<LossParts>> {
        while self.pool.len() < batch.len() {
            self.pool.push(self.params.zero_gradients());
        }
        let (model, params, examples) = (&self.model, &self.params, &self.examples);
        let parts: Vec<LossParts> = self.pool[..batch.len()]
            .par_iter_mut()
            .zip(batch.par_iter().zip(seeds.par_iter()))
            .map(|(g, (&i, &seed))| {
                g.zero();
                model.loss_and_grad(params, &examples[i], seed, Some(g))
            })
            .collect::<Result<_>>()?;
        let (first, rest) = self.pool.split_at_mut(1);
        for g in &rest[..batch.len() - 1] {
            first[0].add(g)?;
        }
        first[0].scale(1.0 / batch.len() as f64);
        self.params.swap_grads(&mut first[0])?;
        self.optimizer.step(&mut self.params);
        Ok(parts)
    }

    /// Runs one epoch and returns its training losses (validation fields empty).
    pub fn run_epoch(&mut self) -> Result<EpochMetrics> {
        let epoch = self.epoch;
        self.optimizer.lr = self.config.lr_at(epoch);
        let order = balanced_order(self.train, self.config.seed, epoch);
        let (mut sum_match, mut sum_render) = (0.0, 0.0);
        for (step, batch) in order.chunks(self.config.batch_size).enumerate() {
            let seeds: Vec<u64> = (0..batch.len())
                .map(|j| point_seed(self.config.seed, epoch, step * self.config.batch_size + j))
                .collect();
            let parts = self.step(batch, &seeds).map_err(|e| match e {
                Error::NonFinite(msg) => Error::NonFinite(format!("epoch {epoch} step {step}: {msg}")),
                other => other,
            })?;
            for lp in &parts {
                if !lp.total.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "epoch {epoch} step {step}: loss {} (matching {}, render {})",
                        lp.total, lp.matching, lp.render
                    )));
                }
                sum_match += lp.matching;
                sum_render += lp.render;
            }
            if !self.params.iter().all(|(_, p)| p.value.all_finite()) {
                return Err(Error::NonFinite(format!("epoch {epoch} step {step}: parameters")));
            }
        }
        self.epoch += 1;
        let n = order.len() as f64;
        Ok(EpochMetrics {
            epoch,
            loss_match: sum_match / n,
            loss_render: sum_render / n,
            val_miou_contour: None,
            val_miou_rendered: None,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            epoch: self.epoch as u32,
            params: self.params.clone(),
            optimizer: self.optimizer.clone(),
        }
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub model: ContourRend,
    pub checkpoint: Checkpoint,
    pub metrics: Vec<EpochMetrics>,
}

/// Trains for `config.epochs` epochs, evaluating on `val` after each one.
/// `on_epoch` sees every row of the metrics log as soon as it is complete.
pub fn train(
    config: &TrainConfig,
    train: &[Sample],
    val: &[Sample],
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(config.clone(), train)?;
    let mut metrics = Vec::with_capacity(config.epochs);
    while trainer.epoch < config.epochs {
        let mut row = trainer.run_epoch()?;
        if !val.is_empty() {
            let report = evaluate(&trainer.model, &trainer.params, val)?;
            row.val_miou_contour = Some(report.contour_only.mean);
            row.val_miou_rendered = Some(report.rendered.mean);
        }
        on_epoch(&row);
        metrics.push(row);
    }
    Ok(TrainOutcome {
        checkpoint: trainer.checkpoint(),
        model: trainer.model,
        metrics,
    })
}
