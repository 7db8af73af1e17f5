//! `trioman` command-line interface.
//!
//! Exit status: 0 on success, 1 for usage or validation errors, 2 for
//! runtime failures.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use trioman::config::{Config, Variant};
use trioman::dataset::{Split, VideoDataset, EVAL_SUBJECT};
use trioman::examiner::select_pseudo_gt;
use trioman::image::Image;
use trioman::pipeline::{self, AblationInputs, Modules};
use trioman::{Error, Result};

#[derive(Parser)]
#[command(name = "trioman", version, about = "Generator/refiner/examiner augmentation for Gaussian-splat avatars")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Master seed.
    #[arg(long)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Continued,
    Gen,
    GenRef,
    Full,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Continued => Variant::Continued,
            VariantArg::Gen => Variant::Generator,
            VariantArg::GenRef => Variant::GeneratorRefiner,
            VariantArg::Full => Variant::Full,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize the evaluation and auxiliary subject videos.
    SynthData(Common),
    /// Train a baseline avatar per subject.
    TrainBaseline(Common),
    /// Render coarse frames with each baseline.
    BuildTriplets(Common),
    /// Train the refiner on the auxiliary subjects.
    TrainRefiner(Common),
    /// Train the examiner on the auxiliary subjects.
    TrainExaminer(Common),
    /// Fine-tune the evaluation baseline with pseudo ground truth.
    FinetuneAugmented {
        #[command(flatten)]
        common: Common,
        /// Overrides `augment.variant`.
        #[arg(long, value_enum)]
        variant: Option<VariantArg>,
    },
    /// Score an avatar checkpoint on a split of the evaluation subject.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Avatar checkpoint; defaults to the evaluation baseline.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        /// Report path; defaults to `reports/<checkpoint stem>-<split>.json`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Render one frame of the evaluation subject to PNG.
    Render {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        frame: usize,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Score candidate images against a reference with the examiner.
    Score {
        #[command(flatten)]
        common: Common,
        #[arg(long, required = true, num_args = 1..)]
        candidate: Vec<PathBuf>,
        #[arg(long)]
        reference: PathBuf,
    },
    /// Fine-tune every ablation variant and print the comparison table.
    RunAblation(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::SynthData(c)
            | Command::TrainBaseline(c)
            | Command::BuildTriplets(c)
            | Command::TrainRefiner(c)
            | Command::TrainExaminer(c)
            | Command::RunAblation(c) => c,
            Command::FinetuneAugmented { common, .. }
            | Command::Evaluate { common, .. }
            | Command::Render { common, .. }
            | Command::Score { common, .. } => common,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    let common = cmd.common().clone();
    let cfg = Config::load(&common.config)?;
    let root = pipeline::data_root(&cfg);
    let seed = common.seed;
    let hash = cfg.hash();
    match cmd {
        Command::SynthData(_) => {
            pipeline::synth_data(&cfg, &root, seed)?;
        }
        Command::TrainBaseline(_) => pipeline::train_baselines(&cfg, &root, seed)?,
        Command::BuildTriplets(_) => pipeline::build_all_triplets(&cfg, &root, seed)?,
        Command::TrainRefiner(_) => {
            let sets = pipeline::aux_triplets(&cfg, &root)?;
            let (r, report) = pipeline::fit_refiner(&cfg, &sets, seed)?;
            r.to_checkpoint(&hash, seed)?.save(&pipeline::refiner_path(&root))?;
            log::info!("refiner: final joint loss {:.5}", report.joint.last().copied().unwrap_or(f64::NAN));
        }
        Command::TrainExaminer(_) => {
            let sets = pipeline::aux_triplets(&cfg, &root)?;
            let (e, trace) = pipeline::fit_examiner(&cfg, &sets, seed)?;
            e.to_checkpoint(&hash, seed)?.save(&pipeline::examiner_path(&root))?;
            log::info!("examiner: final loss {:.5}", trace.last().copied().unwrap_or(f64::NAN));
        }
        Command::FinetuneAugmented { variant, .. } => {
            let mut cfg = cfg.clone();
            if let Some(v) = variant {
                cfg.augment.variant = v.into();
            }
            let ds = pipeline::load_eval(&root)?;
            let model = pipeline::load_avatar(&cfg, &ds, &pipeline::baseline_path(&root, EVAL_SUBJECT))?;
            let v = cfg.augment.variant;
            let needs_refiner = matches!(v, Variant::GeneratorRefiner | Variant::Full);
            let refiner = needs_refiner.then(|| pipeline::load_refiner(&pipeline::refiner_path(&root))).transpose()?;
            let examiner = (v == Variant::Full).then(|| pipeline::load_examiner(&pipeline::examiner_path(&root))).transpose()?;
            let trace = pipeline::augmented_finetune(
                &model,
                &ds,
                Modules { refiner: refiner.as_ref(), examiner: examiner.as_ref() },
                &cfg,
                seed,
            )?;
            let out = pipeline::finetuned_path(&root, EVAL_SUBJECT, v);
            let extra = serde_json::json!({ "variant": v, "steps": trace.steps.len() });
            pipeline::save_avatar(&model, &cfg, seed, &out, extra)?;
            let text = serde_json::to_string_pretty(&trace).map_err(Error::from)?;
            trioman::checkpoint::write_atomic(&out.with_extension("trace.json"), text.as_bytes())?;
            log::info!("wrote {}", out.display());
        }
        Command::Evaluate { checkpoint, split, output, .. } => {
            let started = Instant::now();
            let ds = pipeline::load_eval(&root)?;
            let ck = checkpoint.unwrap_or_else(|| pipeline::baseline_path(&root, EVAL_SUBJECT));
            let model = pipeline::load_avatar(&cfg, &ds, &ck)?;
            let split = match split {
                SplitArg::Train => Split::Train,
                SplitArg::Test => Split::Test,
            };
            let report = pipeline::evaluate(&model, &ds, split, &cfg, seed)?;
            let out = output.unwrap_or_else(|| default_report_path(&root, &ck, split));
            pipeline::write_report(&out, &report, started.elapsed().as_secs_f64())?;
            println!(
                "{}: PSNR {:.3} dB, SSIM {:.4}, perceptual {:.4} over {} frames",
                out.display(),
                report.mean_psnr,
                report.mean_ssim,
                report.mean_perceptual,
                report.frames.len()
            );
        }
        Command::Render { frame, checkpoint, output, .. } => {
            let ds = pipeline::load_eval(&root)?;
            let f = ds
                .frames
                .get(frame)
                .ok_or_else(|| Error::param(format!("frame {frame} out of range (clip has {})", ds.len())))?;
            let ck = checkpoint.unwrap_or_else(|| pipeline::baseline_path(&root, EVAL_SUBJECT));
            let model = pipeline::load_avatar(&cfg, &ds, &ck)?;
            model.render(&f.pose, &f.camera)?.save_png(&output)?;
        }
        Command::Score { candidate, reference, .. } => {
            let examiner = pipeline::load_examiner(&pipeline::examiner_path(&root))?;
            let prep = |p: &Path| -> Result<Image> { scoring_view(&Image::load_png(p)?, &cfg) };
            let reference = prep(&reference)?;
            let views = candidate.iter().map(|p| prep(p)).collect::<Result<Vec<_>>>()?;
            let sel = select_pseudo_gt(&examiner, &views, &reference)?;
            for (p, s) in candidate.iter().zip(&sel.scores) {
                println!("{s:.6}\t{}", p.display());
            }
        }
        Command::RunAblation(_) => {
            let started = Instant::now();
            let ds: VideoDataset = pipeline::load_eval(&root)?;
            let refiner = pipeline::load_refiner(&pipeline::refiner_path(&root))?;
            let examiner = pipeline::load_examiner(&pipeline::examiner_path(&root))?;
            let report = pipeline::run_ablation(&cfg, &AblationInputs { dataset: &ds, refiner: &refiner, examiner: &examiner })?;
            let out = pipeline::reports_dir(&root).join("ablation.json");
            pipeline::write_report(&out, &report, started.elapsed().as_secs_f64())?;
            let table = report.table();
            trioman::checkpoint::write_atomic(&out.with_extension("txt"), table.as_bytes())?;
            print!("{table}");
        }
    }
    Ok(())
}

fn default_report_path(root: &Path, checkpoint: &Path, split: Split) -> PathBuf {
    let stem = checkpoint.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
    let split = match split {
        Split::Train => "train",
        Split::Test => "test",
    };
    pipeline::reports_dir(root).join(format!("{stem}-{split}.json"))
}

/// Images given to `score` are resized to the crop size and centre-cropped
/// to the examiner's input side; pass body crops for meaningful scores.
fn scoring_view(img: &Image, cfg: &Config) -> Result<Image> {
    let side = cfg.crop.examiner_side;
    if img.height == side && img.width == side {
        return Ok(img.clone());
    }
    trioman::dataset::center_square_crop(&img.resize(cfg.crop.height, cfg.crop.width), side)
}
