//! Finite-difference check of the full training objective over every
//! parameter group.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{gen_sample, Category};
use crate::error::{Error, Result};
use crate::generator::GeneratorConfig;
use crate::model::{ContourRend, TrainExample};
use crate::numerics::{piecewise_gradcheck, GradCheckReport, ParamStore, DEFAULT_STEP};
use crate::renderer::RendererConfig;

/// Passing threshold on the relative error of the composed loss.
pub const END_TO_END_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct GradcheckOptions {
    pub generator: GeneratorConfig,
    pub renderer: RendererConfig,
    pub seed: u64,
    /// Scalars probed per parameter tensor; `None` probes all of them.
    pub max_entries: Option<usize>,
    /// Test hook: multiplies the analytic gradient of this parameter by 1.5.
    pub corrupt: Option<String>,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            generator: GeneratorConfig::tiny(),
            renderer: RendererConfig::default(),
            seed: 0,
            max_entries: Some(24),
            corrupt: None,
        }
    }
}

/// Parameters that start at zero (offset and renderer heads) are redrawn
/// with small random values so that gradients reaching the layers below
/// them are not identically zero.
fn randomize_zero_heads(params: &mut ParamStore, rng: &mut ChaCha8Rng) {
    for (name, p) in params.iter_mut() {
        if (name.starts_with("offset") || name.starts_with("renderer")) && p.value.data().iter().all(|&v| v == 0.0) {
            p.value.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-0.1..0.1));
        }
    }
}

pub fn gradcheck_model(opts: &GradcheckOptions) -> Result<GradCheckReport> {
    let (model, mut params) = ContourRend::init(opts.generator.clone(), opts.renderer.clone(), opts.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0xC0FFEE);
    randomize_zero_heads(&mut params, &mut rng);
    let category = Category::ALL[(opts.seed % 8) as usize];
    let sample = gen_sample(opts.seed, category, opts.generator.image_size)?;
    let ex = TrainExample::new(&sample, opts.generator.num_vertices)?;
    let point_seed = opts.seed.wrapping_add(1);

    // render points and labels are constants of the objective, so they are
    // drawn once from the unperturbed contour
    let (out, _) = model.generator().forward(&params, &sample.image)?;
    let targets = model.render_targets(&ex, &out.contour, point_seed);

    let mut grads = params.zero_gradients();
    model.loss_with_targets(&params, &ex, &targets, Some(&mut grads))?;
    if let Some(name) = &opts.corrupt {
        let id = params
            .id(name)
            .ok_or_else(|| Error::invalid(format!("gradcheck: unknown parameter `{name}`")))?;
        grads.get_mut(id).scale(1.5);
    }
    params.set_grads(grads)?;
    let names: Vec<String> = params.names().map(str::to_string).collect();
    let names: Vec<&str> = names.iter().map(String::as_str).collect();
    let grid = opts.generator.grid_size;
    piecewise_gradcheck(&mut params, &names, DEFAULT_STEP, opts.max_entries, |p| {
        let (out, tape) = model.generator().forward(p, &sample.image)?;
        let (parts, shift) = model.loss_from_forward(p, &ex, &out, &tape, &targets, None)?;
        let mut key = tape.piece_key(grid);
        key.push(shift as u32);
        Ok((parts.total, key))
    })
}
