//! Generator and renderer head wired together: the training objective with
//! its gradient, and inference producing both contour-only and rendered masks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Sample;
use crate::error::Result;
use crate::generator::{matching_loss, Generator, GeneratorConfig, GeneratorGrads, GeneratorOutput, GeneratorTape};
use crate::geometry::{rasterize_polygon, resample_contour, Contour, Mask, Point01};
use crate::layers::ParamBuilder;
use crate::numerics::{bce_with_logits, bilinear_backward, bilinear_sample, Gradients, ParamStore, Tensor};
use crate::renderer::{
    foreground_probs, point_targets, render_mask, renderer_loss, sample_test_grid, sample_train_points, Region,
    RendererConfig, RendererHead, TargetSource,
};

/// Loss components for one example. `total = matching + λ·render + branch`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossParts {
    pub matching: f64,
    pub render: f64,
    pub branch: f64,
    pub total: f64,
}

/// A training example with its `K`-point matching target precomputed.
#[derive(Debug, Clone)]
pub struct TrainExample<'a> {
    pub sample: &'a Sample,
    pub target: Contour,
}

impl<'a> TrainExample<'a> {
    pub fn new(sample: &'a Sample, k: usize) -> Result<Self> {
        Ok(Self {
            sample,
            target: resample_contour(&sample.gt_contour, k)?,
        })
    }
}

/// Render points and their labels; constants of the objective.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderTargets {
    pub points: Vec<Point01>,
    pub labels: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct Prediction {
    pub contour: Contour,
    pub points: Vec<Point01>,
    pub fg_probs: Vec<f64>,
    pub contour_mask: Mask,
    pub rendered_mask: Mask,
}

#[derive(Debug, Clone)]
pub struct ContourRend {
    generator: Generator,
    head: RendererHead,
    renderer: RendererConfig,
}

fn cell_map<'a>(points: impl Iterator<Item = &'a Point01>, g: usize) -> Tensor {
    let mut t = Tensor::zeros(&[1, g * g]);
    let cell = |u: f64| ((u * g as f64).floor().max(0.0) as usize).min(g - 1);
    for p in points {
        t.data_mut()[cell(p.y) * g + cell(p.x)] = 1.0;
    }
    t
}

impl ContourRend {
    /// Fresh parameters drawn from `seed`.
    pub fn init(generator: GeneratorConfig, renderer: RendererConfig, seed: u64) -> Result<(Self, ParamStore)> {
        renderer.validate()?;
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let channels = generator.backbone_channels;
        let gen = Generator::new(generator, &mut store, &mut rng)?;
        let head = RendererHead::build(&mut ParamBuilder::Create { store: &mut store, rng: &mut rng }, channels)?;
        Ok((
            Self {
                generator: gen,
                head,
                renderer,
            },
            store,
        ))
    }

    /// Attaches to an existing parameter store, checking every name and shape.
    pub fn bind(generator: GeneratorConfig, renderer: RendererConfig, store: &ParamStore) -> Result<Self> {
        renderer.validate()?;
        let channels = generator.backbone_channels;
        let gen = Generator::bind(generator, store)?;
        let head = RendererHead::build(&mut ParamBuilder::<ChaCha8Rng>::Bind { store }, channels)?;
        Ok(Self {
            generator: gen,
            head,
            renderer,
        })
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    pub fn head(&self) -> &RendererHead {
        &self.head
    }

    pub fn renderer_config(&self) -> &RendererConfig {
        &self.renderer
    }

    /// Render points around `contour` and their labels, drawn from `point_seed`.
    pub fn render_targets(&self, ex: &TrainExample<'_>, contour: &Contour, point_seed: u64) -> RenderTargets {
        let mut rng = ChaCha8Rng::seed_from_u64(point_seed);
        let points = sample_train_points(
            contour,
            self.renderer.train_samples_per_vertex,
            self.renderer.train_offset_range,
            &mut rng,
        );
        let region = match self.renderer.target_source {
            TargetSource::GroundTruth => Region::Contour(&ex.sample.gt_contour),
            TargetSource::Predicted => Region::Contour(contour),
        };
        let labels = point_targets(&points, region);
        RenderTargets { points, labels }
    }

    /// Training objective for one example. `point_seed` drives the random
    /// render points; when `grads` is given, parameter gradients of the total
    /// are accumulated into it. Render points are treated as constants.
    pub fn loss_and_grad(
        &self,
        p: &ParamStore,
        ex: &TrainExample<'_>,
        point_seed: u64,
        grads: Option<&mut Gradients>,
    ) -> Result<LossParts> {
        let (out, tape) = self.generator.forward(p, &ex.sample.image)?;
        let targets = self.render_targets(ex, &out.contour, point_seed);
        Ok(self.loss_from_forward(p, ex, &out, &tape, &targets, grads)?.0)
    }

    /// The same objective with the render targets held fixed.
    pub fn loss_with_targets(
        &self,
        p: &ParamStore,
        ex: &TrainExample<'_>,
        targets: &RenderTargets,
        grads: Option<&mut Gradients>,
    ) -> Result<LossParts> {
        let (out, tape) = self.generator.forward(p, &ex.sample.image)?;
        Ok(self.loss_from_forward(p, ex, &out, &tape, targets, grads)?.0)
    }

    /// Also returns the matching shift.
    pub(crate) fn loss_from_forward(
        &self,
        p: &ParamStore,
        ex: &TrainExample<'_>,
        out: &GeneratorOutput,
        tape: &GeneratorTape,
        targets: &RenderTargets,
        grads: Option<&mut Gradients>,
    ) -> Result<(LossParts, usize)> {
        let cfg = self.generator.config();
        let lambda = self.renderer.loss_weight;
        let m = matching_loss(&out.contour, &ex.target)?;
        let mut parts = LossParts {
            matching: m.loss,
            ..LossParts::default()
        };
        let mut up = GeneratorGrads {
            contour: m.grad,
            ..GeneratorGrads::default()
        };
        let mut grads = grads;

        if !targets.points.is_empty() {
            let feats = bilinear_sample(&out.backbone_fm, &targets.points)?;
            let logits = self.head.classify_points(p, &feats)?;
            let (loss, mut dlogits) = renderer_loss(&logits, &targets.labels)?;
            parts.render = loss;
            if let Some(g) = grads.as_deref_mut() {
                if lambda != 0.0 {
                    dlogits.scale(lambda);
                    let dfeats = self.head.linear().backward(p, &feats, &dlogits, g)?;
                    let (dfm, _) = bilinear_backward(&out.backbone_fm, &targets.points, &dfeats)?;
                    up.backbone_fm = Some(dfm);
                }
            }
        }

        if cfg.branch_supervision {
            let g = cfg.grid_size;
            let (edge_logits, vertex_logits) = tape.branch_logits();
            let edge_t = cell_map(ex.sample.gt_contour.vertices().iter(), g);
            let vertex_t = cell_map(ex.target.vertices().iter(), g);
            let (le, ge) = bce_with_logits(edge_logits, &edge_t)?;
            let (lv, gv) = bce_with_logits(vertex_logits, &vertex_t)?;
            parts.branch = le + lv;
            up.edge_logits = Some(ge);
            up.vertex_logits = Some(gv);
        }

        parts.total = parts.matching + lambda * parts.render + parts.branch;
        if let Some(g) = grads {
            self.generator.backward(p, out, tape, &up, g)?;
        }
        Ok((parts, m.shift))
    }

    /// Renderer logits for a batch of points on an already computed backbone map.
    pub fn classify(&self, p: &ParamStore, out: &GeneratorOutput, points: &[Point01]) -> Result<Vec<f64>> {
        if points.is_empty() {
            return Ok(Vec::new());
        }
        let feats = bilinear_sample(&out.backbone_fm, points)?;
        foreground_probs(&self.head.classify_points(p, &feats)?)
    }

    pub fn predict(&self, p: &ParamStore, image: &Tensor) -> Result<Prediction> {
        let s = self.generator.config().image_size;
        let out = self.generator.predict_contour(p, image)?;
        let points = sample_test_grid(&out.contour, self.renderer.test_grid_side, self.renderer.test_square_size);
        let fg_probs = self.classify(p, &out, &points)?;
        let contour_mask = rasterize_polygon(&out.contour, s, s)?;
        let rendered_mask = render_mask(&out.contour, &points, &fg_probs, self.renderer.fg_threshold, s, s)?;
        Ok(Prediction {
            contour: out.contour,
            points,
            fg_probs,
            contour_mask,
            rendered_mask,
        })
    }
}
