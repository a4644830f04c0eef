//! Command-line front end: data generation, training, evaluation,
//! inference and gradient checking.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use contourrend::check::{gradcheck_model, GradcheckOptions, END_TO_END_TOLERANCE};
use contourrend::data::{generate_dataset, read_dataset, write_dataset, DatasetSplit, SplitCounts, SplitKind};
use contourrend::eval::evaluate_contours;
use contourrend::infer::infer;
use contourrend::train::write_metrics_csv;
use contourrend::{evaluate, Checkpoint, ContourRend, GeneratorConfig, TrainConfig};

#[derive(Parser)]
#[command(name = "contourrend", version, about = "Contour generation with point rendering on synthetic shapes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Generate the synthetic train/val/test dataset.
    GenData(GenDataArgs),
    /// Train a model and write a checkpoint plus metrics log.
    Train(TrainArgs),
    /// Per-category IoU report for a checkpoint.
    Eval(EvalArgs),
    /// Predict on one PPM image and write the contour, masks and point overlay.
    Infer(InferArgs),
    /// Finite-difference check of every parameter group on a tiny model.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 64)]
    image_size: usize,
    #[arg(long, default_value_t = 500)]
    train: usize,
    #[arg(long, default_value_t = 100)]
    val: usize,
    #[arg(long, default_value_t = 200)]
    test: usize,
}

/// Flags that override config keys of the same name.
#[derive(Args, Default)]
struct ConfigFlags {
    /// `key = value` config file; flags below take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    k_vertices: Option<String>,
    #[arg(long)]
    grid_n: Option<String>,
    #[arg(long)]
    square_s: Option<String>,
    #[arg(long)]
    threshold: Option<String>,
    /// Any other config key, as `key=value`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigFlags {
    fn overrides(&self) -> Result<Vec<(String, String)>> {
        let mut out = Vec::new();
        let named = [
            ("lr", &self.lr),
            ("epochs", &self.epochs),
            ("batch-size", &self.batch_size),
            ("seed", &self.seed),
            ("lambda", &self.lambda),
            ("k-vertices", &self.k_vertices),
            ("grid-n", &self.grid_n),
            ("square-s", &self.square_s),
            ("threshold", &self.threshold),
        ];
        for (k, v) in named {
            if let Some(v) = v {
                out.push((k.to_string(), v.clone()));
            }
        }
        for kv in &self.set {
            let (k, v) = kv.split_once('=').with_context(|| format!("--set expects KEY=VALUE, got `{kv}`"))?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(out)
    }

    fn resolve(&self) -> Result<TrainConfig> {
        Ok(TrainConfig::parse_config(self.config.as_deref(), &self.overrides()?)?)
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory from `gen-data`. Without it a default dataset is
    /// generated in memory from the config seed.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Run directory for checkpoint.bin, metrics.csv and config.txt.
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    flags: ConfigFlags,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for SplitKind {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => SplitKind::Train,
            SplitArg::Val => SplitKind::Val,
            SplitArg::Test => SplitKind::Test,
        }
    }
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    /// Where to write eval.csv; defaults to the checkpoint's directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Score the ground-truth contours resampled to K vertices instead of the model.
    #[arg(long)]
    oracle: bool,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Scalars probed per parameter tensor (0 probes every entry).
    #[arg(long, default_value_t = 24)]
    max_entries: usize,
    #[arg(long, hide = true)]
    corrupt: Option<String>,
}

fn load_data(dir: &Path) -> Result<DatasetSplit> {
    read_dataset(dir).with_context(|| format!("reading dataset {}", dir.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn gen_data(a: GenDataArgs) -> Result<()> {
    let counts = SplitCounts {
        train: a.train,
        val: a.val,
        test: a.test,
    };
    let split = generate_dataset(a.seed, a.image_size, counts)?;
    create_dir(&a.out_dir)?;
    write_dataset(&split, &a.out_dir)?;
    println!(
        "wrote {} train / {} val / {} test samples to {}",
        a.train,
        a.val,
        a.test,
        a.out_dir.display()
    );
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let cfg = a.flags.resolve()?;
    let data = match &a.data {
        Some(dir) => load_data(dir)?,
        None => generate_dataset(cfg.seed, cfg.generator.image_size, SplitCounts::default())?,
    };
    if data.image_size != cfg.generator.image_size {
        bail!(
            "dataset image size {} does not match config image_size {}",
            data.image_size,
            cfg.generator.image_size
        );
    }
    create_dir(&a.out_dir)?;
    let config_path = a.out_dir.join("config.txt");
    std::fs::write(&config_path, cfg.to_text()).with_context(|| format!("writing {}", config_path.display()))?;
    println!("epoch  loss_match  loss_render  val_contour  val_rendered");
    let outcome = contourrend::train(&cfg, &data.train, &data.val, |m| {
        println!(
            "{:>5}  {:>10.5}  {:>11.5}  {:>11.4}  {:>12.4}",
            m.epoch,
            m.loss_match,
            m.loss_render,
            m.val_miou_contour.unwrap_or(f64::NAN),
            m.val_miou_rendered.unwrap_or(f64::NAN)
        );
    })?;
    let metrics_path = a.out_dir.join("metrics.csv");
    write_metrics_csv(&outcome.metrics, &metrics_path)?;
    let ck_path = a.out_dir.join("checkpoint.bin");
    outcome.checkpoint.save(&ck_path)?;
    println!("saved {}", ck_path.display());
    Ok(())
}

fn eval_cmd(a: EvalArgs) -> Result<()> {
    let ck = Checkpoint::load(&a.checkpoint).with_context(|| format!("loading {}", a.checkpoint.display()))?;
    let data = load_data(&a.data)?;
    let samples = data.split(a.split.into());
    let out_dir = match &a.out_dir {
        Some(d) => d.clone(),
        None => a.checkpoint.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    if a.oracle {
        let k = ck.config.generator.num_vertices;
        let table = evaluate_contours(samples, |s| contourrend::geometry::resample_contour(&s.gt_contour, k))?;
        println!("oracle contours (K = {k}): mean IoU {:.4}", table.mean);
        return Ok(());
    }
    if data.image_size != ck.config.generator.image_size {
        bail!(
            "dataset image size {} does not match checkpoint image_size {}",
            data.image_size,
            ck.config.generator.image_size
        );
    }
    let model = ContourRend::bind(ck.config.generator.clone(), ck.config.renderer.clone(), &ck.params)?;
    let report = evaluate(&model, &ck.params, samples)?;
    print!("{}", report.to_table());
    create_dir(&out_dir)?;
    let csv = out_dir.join("eval.csv");
    std::fs::write(&csv, report.to_csv()).with_context(|| format!("writing {}", csv.display()))?;
    Ok(())
}

fn infer_cmd(a: InferArgs) -> Result<()> {
    let ck = Checkpoint::load(&a.checkpoint).with_context(|| format!("loading {}", a.checkpoint.display()))?;
    let model = ContourRend::bind(ck.config.generator.clone(), ck.config.renderer.clone(), &ck.params)?;
    let out = infer(&model, &ck.params, &a.image, &a.out_dir)?;
    for p in [&out.contour_json, &out.contour_mask, &out.rendered_mask, &out.overlay] {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn gradcheck_cmd(a: GradcheckArgs) -> Result<ExitCode> {
    let opts = GradcheckOptions {
        generator: GeneratorConfig::tiny(),
        seed: a.seed,
        max_entries: (a.max_entries > 0).then_some(a.max_entries),
        corrupt: a.corrupt,
        ..GradcheckOptions::default()
    };
    let report = gradcheck_model(&opts)?;
    for g in &report.groups {
        println!("{:<28} {:>5} entries  max rel err {:.3e}", g.name, g.checked, g.max_rel_err);
    }
    println!(
        "{} probes, {} one-sided at a kink, {} skipped",
        report.probes(),
        report.one_sided(),
        report.skipped()
    );
    let worst = report.worst().context("no parameter groups checked")?;
    println!(
        "worst: {}[{}] analytic {:.6e} numeric {:.6e} rel err {:.3e}",
        worst.name, worst.worst_index, worst.analytic, worst.numeric, worst.max_rel_err
    );
    if report.max_rel_err() < END_TO_END_TOLERANCE {
        println!("gradcheck passed");
        Ok(ExitCode::SUCCESS)
    } else {
        println!("gradcheck FAILED (tolerance {END_TO_END_TOLERANCE:e})");
        Ok(ExitCode::FAILURE)
    }
}

fn main() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::GenData(a) => gen_data(a)?,
        Command::Train(a) => train_cmd(a)?,
        Command::Eval(a) => eval_cmd(a)?,
        Command::Infer(a) => infer_cmd(a)?,
        Command::Gradcheck(a) => return gradcheck_cmd(a),
    }
    Ok(ExitCode::SUCCESS)
}
