//! Orchestration: the stages the CLI exposes, augmented fine-tuning,
//! evaluation and the module ablation.
//!
//! Artifacts live under the data root next to the datasets:
//!
//! ```text
//! models/<subject>/baseline.ckpt
//! models/<subject>/finetuned-<variant>.ckpt
//! models/refiner.ckpt
//! models/examiner.ckpt
//! reports/<name>.json            (+ <name>.timing.json)
//! ```

use std::path::{Path, PathBuf};
use std::time::Instant;

use candle_core::{DType, Device};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::avatar::{prepare_views, train_baseline, AvatarModel, Observation, PoseCache, Trainer};
use crate::body::{pose_mesh, render_normal_map};
use crate::camera::CameraPose;
use crate::checkpoint::{write_atomic, Checkpoint};
use crate::config::{Config, Variant};
use crate::dataset::{
    self, assemble_refiner_sample, build_triplets, crop_and_resize, crop_rect, sample_refiner_pair, subject_names, Split,
    TripletSet, VideoDataset, EVAL_SUBJECT,
};
use crate::error::{Error, Result};
use crate::examiner::{examiner_view, select_pseudo_gt, train_examiner, Examiner, ExaminerSample};
use crate::generator::{generate_coarse, CoarseSample, SourceFrame};
use crate::image::Image;
use crate::metrics;
use crate::nn::{self, LossWeights, PerceptualProxy};
use crate::refiner::{refine, train_refiner, Refiner, RefinerReport};
use crate::rng::{self, Rng};

pub fn models_dir(root: &Path) -> PathBuf {
    root.join("models")
}

pub fn baseline_path(root: &Path, subject: &str) -> PathBuf {
    models_dir(root).join(subject).join("baseline.ckpt")
}

pub fn variant_slug(v: Variant) -> &'static str {
    match v {
        Variant::Continued => "continued",
        Variant::Generator => "gen",
        Variant::GeneratorRefiner => "gen-ref",
        Variant::Full => "full",
    }
}

pub fn finetuned_path(root: &Path, subject: &str, v: Variant) -> PathBuf {
    models_dir(root).join(subject).join(format!("finetuned-{}.ckpt", variant_slug(v)))
}

pub fn refiner_path(root: &Path) -> PathBuf {
    models_dir(root).join("refiner.ckpt")
}

pub fn examiner_path(root: &Path) -> PathBuf {
    models_dir(root).join("examiner.ckpt")
}

pub fn reports_dir(root: &Path) -> PathBuf {
    root.join("reports")
}

/// Data root: the environment override wins over the config.
pub fn data_root(cfg: &Config) -> PathBuf {
    match std::env::var_os(crate::config::DATA_DIR_ENV) {
        Some(p) if !p.is_empty() => PathBuf::from(p),
        _ => cfg.data.root.clone(),
    }
}

pub fn observations(ds: &VideoDataset, split: Split) -> Vec<Observation> {
    ds.frames
        .iter()
        .filter(|f| f.split == split)
        .map(|f| Observation {
            image: f.image.clone(),
            pose: f.pose.clone(),
            camera: f.camera,
        })
        .collect()
}

pub fn new_avatar(cfg: &Config, ds: &VideoDataset, seed: u64) -> Result<AvatarModel> {
    AvatarModel::new(
        ds.subject.skeleton.clone(),
        ds.subject.mesh.clone(),
        cfg.avatar.clone(),
        seed,
        DType::F32,
    )
}

pub fn load_avatar(cfg: &Config, ds: &VideoDataset, path: &Path) -> Result<AvatarModel> {
    let ck = Checkpoint::load_kind(path, "avatar")?;
    let mut m = new_avatar(cfg, ds, ck.meta.seed)?;
    m.load_arrays(&ck)?;
    Ok(m)
}

pub fn save_avatar(model: &AvatarModel, cfg: &Config, seed: u64, path: &Path, extra: serde_json::Value) -> Result<()> {
    model.to_checkpoint(&cfg.hash(), seed, extra)?.save(path)
}

/// Synthesizes and writes every subject.
pub fn synth_data(cfg: &Config, root: &Path, seed: u64) -> Result<Vec<VideoDataset>> {
    subject_names(&cfg.data)
        .iter()
        .map(|name| {
            let ds = dataset::synthesize_subject_video(&cfg.data, name, seed)?;
            ds.save(root, &cfg.hash())?;
            log::info!("synthesized {name}: {} frames", ds.len());
            Ok(ds)
        })
        .collect()
}

/// Trains a baseline on a subject's training split.
pub fn fit_baseline(cfg: &Config, ds: &VideoDataset, seed: u64) -> Result<(AvatarModel, Vec<f64>)> {
    let model = new_avatar(cfg, ds, seed)?;
    let trace = train_baseline(&model, &observations(ds, Split::Train), &cfg.baseline, seed)?;
    Ok((model, trace))
}

pub fn train_baselines(cfg: &Config, root: &Path, seed: u64) -> Result<()> {
    for name in subject_names(&cfg.data) {
        let ds = VideoDataset::load(root, &name)?;
        let (model, trace) = fit_baseline(cfg, &ds, seed)?;
        let last = trace.last().copied().unwrap_or(f64::NAN);
        save_avatar(&model, cfg, seed, &baseline_path(root, &name), serde_json::json!({ "steps": trace.len(), "final_loss": last }))?;
        log::info!("baseline {name}: final loss {last:.5}");
    }
    Ok(())
}

pub fn build_all_triplets(cfg: &Config, root: &Path, seed: u64) -> Result<()> {
    for name in subject_names(&cfg.data) {
        let ds = VideoDataset::load(root, &name)?;
        let model = load_avatar(cfg, &ds, &baseline_path(root, &name))?;
        let set = build_triplets(&ds, &model)?;
        set.save(root, &cfg.hash(), seed, &model.fingerprint()?)?;
    }
    Ok(())
}

pub fn load_triplets(root: &Path, name: &str) -> Result<TripletSet> {
    let ds = VideoDataset::load(root, name)?;
    TripletSet::load(root, &ds)
}

pub fn aux_triplets(cfg: &Config, root: &Path) -> Result<Vec<TripletSet>> {
    (0..cfg.data.held_out_subjects)
        .map(|i| load_triplets(root, &dataset::aux_name(i)))
        .collect()
}

fn pick_set<'a>(sets: &'a [TripletSet], rng: &mut Rng) -> Result<&'a TripletSet> {
    if sets.is_empty() {
        return Err(Error::param("no triplet sets to sample from"));
    }
    Ok(&sets[rng.random_range(0..sets.len())])
}

/// Draws `count` refiner samples; pairs whose coarse mask is empty are redrawn.
pub fn refiner_pool(sets: &[TripletSet], cfg: &Config, count: usize, rng: &mut Rng) -> Result<Vec<crate::dataset::RefinerSample>> {
    let mut out = Vec::with_capacity(count);
    let mut skipped = 0;
    while out.len() < count {
        let set = pick_set(sets, rng)?;
        let (t, k) = sample_refiner_pair(set, cfg.refiner.max_offset, rng)?;
        match assemble_refiner_sample(set, t, k, &cfg.crop) {
            Ok(s) => out.push(s),
            Err(Error::SkipSample(_)) if skipped < 10 * count => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Draws `count` examiner samples: real frame, coarse frame and a nearby
/// reference, each cropped with its own mask.
pub fn examiner_pool(sets: &[TripletSet], cfg: &Config, count: usize, rng: &mut Rng) -> Result<Vec<ExaminerSample>> {
    let mut out = Vec::with_capacity(count);
    let mut skipped = 0;
    while out.len() < count {
        let set = pick_set(sets, rng)?;
        let (t, k) = sample_refiner_pair(set, cfg.refiner.max_offset, rng)?;
        let tr = &set.triplets[t];
        let rf = &set.triplets[(t as isize + k) as usize];
        let crop = |img: &Image, m| crop_and_resize(img, m, &cfg.crop).map(|c| c.0);
        match (crop(&tr.gt, &tr.gt_mask), crop(&tr.coarse, &tr.coarse_mask), crop(&rf.gt, &rf.gt_mask)) {
            (Ok(real), Ok(coarse), Ok(reference)) => out.push(ExaminerSample { real, coarse, reference }),
            _ if skipped < 10 * count => skipped += 1,
            _ => return Err(Error::SkipSample("too many empty masks in the triplet sets".into())),
        }
    }
    Ok(out)
}

fn module_seed(own: Option<u64>, master: u64) -> u64 {
    own.unwrap_or(master)
}

/// Trains the refiner on the auxiliary subjects' triplets.
pub fn fit_refiner(cfg: &Config, sets: &[TripletSet], seed: u64) -> Result<(Refiner, RefinerReport)> {
    let seed = module_seed(cfg.refiner.seed, seed);
    let mut rng = rng::stream(seed, "refiner-pool");
    let pool = refiner_pool(sets, cfg, cfg.refiner.samples, &mut rng)?;
    let mut r = Refiner::new(&cfg.refiner, seed)?;
    let report = train_refiner(&mut r, &pool, seed)?;
    Ok((r, report))
}

pub fn fit_examiner(cfg: &Config, sets: &[TripletSet], seed: u64) -> Result<(Examiner, Vec<f64>)> {
    let seed = module_seed(cfg.examiner.seed, seed);
    let mut rng = rng::stream(seed, "examiner-pool");
    let pool = examiner_pool(sets, cfg, cfg.examiner.samples, &mut rng)?;
    let mut e = Examiner::new(&cfg.examiner, cfg.crop.examiner_side, seed)?;
    let trace = train_examiner(&mut e, &pool, seed)?;
    Ok((e, trace))
}

pub fn load_refiner(path: &Path) -> Result<Refiner> {
    Refiner::from_checkpoint(&Checkpoint::load_kind(path, crate::refiner::CHECKPOINT_KIND)?)
}

pub fn load_examiner(path: &Path) -> Result<Examiner> {
    Examiner::from_checkpoint(&Checkpoint::load_kind(path, crate::examiner::CHECKPOINT_KIND)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Gt,
    Pseudo,
    /// Pseudo branch abandoned (empty mask); a GT step on the source frame ran instead.
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub branch: Branch,
    /// Training-frame index (position within the training split).
    pub frame: usize,
    pub loss: f64,
    /// Examiner score of the selected candidate, when one was scored.
    pub score: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FinetuneTrace {
    pub steps: Vec<StepRecord>,
}

impl FinetuneTrace {
    pub fn losses(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.loss).collect()
    }

    pub fn count(&self, b: Branch) -> usize {
        self.steps.iter().filter(|s| s.branch == b).count()
    }

    /// (step, frame) of every GT-branch step.
    pub fn gt_schedule(&self) -> Vec<(usize, usize)> {
        self.steps
            .iter()
            .filter(|s| s.branch == Branch::Gt)
            .map(|s| (s.step, s.frame))
            .collect()
    }
}

/// Frozen modules available to the pseudo branch.
#[derive(Clone, Copy, Default)]
pub struct Modules<'a> {
    pub refiner: Option<&'a Refiner>,
    pub examiner: Option<&'a Examiner>,
}

struct PseudoTarget {
    image: Image,
    pose: crate::body::PoseVector,
    camera: CameraPose,
    score: Option<f64>,
}

fn normal_map_for(ds: &VideoDataset, c: &CoarseSample) -> Result<Image> {
    let v = pose_mesh(&ds.subject.skeleton, &ds.subject.mesh, &c.pose)?;
    Ok(render_normal_map(&v, &ds.subject.mesh.faces, &c.camera)?.image)
}

fn pseudo_target(
    variant: Variant,
    cands: Vec<CoarseSample>,
    source: &Image,
    source_mask: &crate::image::Mask,
    ds: &VideoDataset,
    modules: Modules,
    cfg: &Config,
) -> Result<PseudoTarget> {
    let into = |c: CoarseSample, image: Image, score| PseudoTarget {
        image,
        pose: c.pose,
        camera: c.camera,
        score,
    };
    match variant {
        Variant::Continued => Err(Error::param("continued training has no pseudo branch")),
        Variant::Generator => {
            let c = cands.into_iter().next().expect("at least one candidate");
            let img = c.image.clone();
            Ok(into(c, img, None))
        }
        Variant::GeneratorRefiner => {
            let r = modules.refiner.expect("checked by caller");
            let c = cands.into_iter().next().expect("at least one candidate");
            let img = refine(r, &c, source, &normal_map_for(ds, &c)?, &cfg.crop)?;
            Ok(into(c, img, None))
        }
        Variant::Full => {
            let r = modules.refiner.expect("checked by caller");
            let e = modules.examiner.expect("checked by caller");
            let mut refined = Vec::with_capacity(cands.len());
            let mut views = Vec::with_capacity(cands.len());
            for c in &cands {
                let img = refine(r, c, source, &normal_map_for(ds, c)?, &cfg.crop)?;
                views.push(examiner_view(&img, &c.mask, &cfg.crop)?);
                refined.push(img);
            }
            let reference = examiner_view(source, source_mask, &cfg.crop)?;
            let sel = select_pseudo_gt(e, &views, &reference)?;
            let c = cands.into_iter().nth(sel.index).expect("selected index in range");
            Ok(into(c, refined.swap_remove(sel.index), Some(sel.score)))
        }
    }
}

/// Fine-tunes `model` in place. Each step flips a coin on the `ft-branch`
/// stream (always drawn, so every variant sees the same schedule). GT steps
/// draw their frame from `ft-gt`; pseudo steps draw the source frame and the
/// perturbations from `ft-pseudo`. The continued variant runs a GT step
/// whenever the coin would have chosen the pseudo branch.
pub fn augmented_finetune(model: &AvatarModel, ds: &VideoDataset, modules: Modules, cfg: &Config, seed: u64) -> Result<FinetuneTrace> {
    let aug = &cfg.augment;
    aug.validate()?;
    let needs_refiner = matches!(aug.variant, Variant::GeneratorRefiner | Variant::Full);
    if needs_refiner && modules.refiner.is_none() {
        return Err(Error::validation(format!("{} needs a refiner checkpoint", aug.variant.label())));
    }
    if aug.variant == Variant::Full && modules.examiner.is_none() {
        return Err(Error::validation(format!("{} needs an examiner checkpoint", aug.variant.label())));
    }
    let train: Vec<&crate::dataset::Frame> = ds.frames.iter().filter(|f| f.split == Split::Train).collect();
    if train.is_empty() {
        return Err(Error::param("fine-tuning needs training frames"));
    }
    let views = prepare_views(model, &observations(ds, Split::Train))?;
    let mut trainer = Trainer::new(model, aug.learning_rate, cfg.baseline.loss_weights())?;
    let pseudo_weights = if aug.full_loss {
        cfg.baseline.loss_weights()
    } else {
        LossWeights { ssim: 0.0, perceptual: 0.0 }
    };
    let mut branch_rng = rng::stream(seed, "ft-branch");
    let mut gt_rng = rng::stream(seed, "ft-gt");
    let mut pseudo_rng = rng::stream(cfg.generator.seed.unwrap_or(seed), "ft-pseudo");
    let mut trace = FinetuneTrace::default();
    for step in 0..aug.steps {
        let coin = branch_rng.random::<f64>() < aug.pseudo_gt_probability;
        if !coin || aug.variant == Variant::Continued {
            let i = gt_rng.random_range(0..views.len());
            let v = &views[i];
            let loss = trainer.step(model, &[(&v.cache, &v.camera, &v.target)], None)?;
            trace.steps.push(StepRecord { step, branch: Branch::Gt, frame: i, loss, score: None });
            continue;
        }
        let i = pseudo_rng.random_range(0..train.len());
        let src = train[i];
        let source = SourceFrame { index: i, pose: src.pose.clone(), camera: src.camera };
        let cands = generate_coarse(model, &source, &cfg.generator, &mut pseudo_rng, aug.candidates_per_sample)?;
        match pseudo_target(aug.variant, cands, &src.image, &src.mask, ds, modules, cfg) {
            Ok(t) => {
                let cache: PoseCache = model.pose_cache(&t.pose)?;
                let target = t.image.to_tensor(&Device::Cpu)?.to_dtype(model.dtype())?;
                let loss = trainer.step(model, &[(&cache, &t.camera, &target)], Some(pseudo_weights))?;
                trace.steps.push(StepRecord { step, branch: Branch::Pseudo, frame: i, loss, score: t.score });
            }
            Err(Error::SkipSample(why)) => {
                log::debug!("step {step}: pseudo sample skipped ({why}); GT step on the source frame");
                let v = &views[i];
                let loss = trainer.step(model, &[(&v.cache, &v.camera, &v.target)], None)?;
                trace.steps.push(StepRecord { step, branch: Branch::Fallback, frame: i, loss, score: None });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub index: usize,
    pub psnr: f64,
    pub ssim: f64,
    pub perceptual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub subject: String,
    pub split: Split,
    pub config_hash: String,
    pub seed: u64,
    pub model: String,
    pub frames: Vec<FrameMetrics>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    pub mean_perceptual: f64,
}

/// Wall-clock data kept out of the report so reports stay reproducible.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Timing {
    pub seconds: f64,
}

/// Metrics of `rendered` against `gt` inside the GT mask's crop.
pub fn crop_metrics(rendered: &Image, gt: &Image, gt_mask: &crate::image::Mask, cfg: &Config, proxy: &PerceptualProxy) -> Result<(f64, f64, f64)> {
    let rect = crop_rect(gt_mask, cfg.crop.extension)?;
    let a = rendered.resample_rect(rect, cfg.crop.height, cfg.crop.width);
    let b = gt.resample_rect(rect, cfg.crop.height, cfg.crop.width);
    let p = nn::scalar(&proxy.distance(&a.to_tensor(&Device::Cpu)?, &b.to_tensor(&Device::Cpu)?)?)?;
    Ok((metrics::psnr(&a, &b)?, metrics::ssim(&a, &b)?, p))
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

pub fn report_from_frames(subject: &str, split: Split, cfg: &Config, seed: u64, model: String, frames: Vec<FrameMetrics>) -> MetricsReport {
    MetricsReport {
        subject: subject.to_string(),
        split,
        config_hash: cfg.hash(),
        seed,
        model,
        mean_psnr: mean(frames.iter().map(|f| f.psnr)),
        mean_ssim: mean(frames.iter().map(|f| f.ssim)),
        mean_perceptual: mean(frames.iter().map(|f| f.perceptual)),
        frames,
    }
}

/// Renders every frame of `split` at its recorded pose and camera and scores
/// it against the ground truth over the mask crop.
pub fn evaluate(model: &AvatarModel, ds: &VideoDataset, split: Split, cfg: &Config, seed: u64) -> Result<MetricsReport> {
    let proxy = PerceptualProxy::new(DType::F32)?;
    let mut frames = Vec::new();
    for (i, f) in ds.frames.iter().enumerate().filter(|(_, f)| f.split == split) {
        let img = model.render(&f.pose, &f.camera)?;
        let (psnr, ssim, perceptual) = crop_metrics(&img, &f.image, &f.mask, cfg, &proxy)?;
        frames.push(FrameMetrics { index: i, psnr, ssim, perceptual });
    }
    if frames.is_empty() {
        return Err(Error::param("evaluation split is empty"));
    }
    Ok(report_from_frames(&ds.name, split, cfg, seed, model.fingerprint()?, frames))
}

pub fn write_report<T: Serialize>(path: &Path, report: &T, seconds: f64) -> Result<()> {
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())?;
    let timing = serde_json::to_string_pretty(&Timing { seconds })?;
    write_atomic(&path.with_extension("timing.json"), timing.as_bytes())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Done,
    /// Not run: the wall-clock budget ran out first.
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    pub variant: Variant,
    pub pose_variance: f64,
    /// Held-out mean PSNR per seed (NaN-free; skipped runs are absent).
    pub psnr: Vec<f64>,
    pub ssim: Vec<f64>,
    pub status: Vec<RunStatus>,
}

impl AblationRow {
    pub fn mean_psnr(&self) -> Option<f64> {
        (!self.psnr.is_empty()).then(|| mean(self.psnr.iter().copied()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub config_hash: String,
    pub seeds: Vec<u64>,
    /// Held-out PSNR of the baseline before fine-tuning, per seed.
    pub baseline_psnr: Vec<f64>,
    pub rows: Vec<AblationRow>,
    pub complete: bool,
}

pub const ABLATION_ORDER: [Variant; 4] = [Variant::Continued, Variant::Generator, Variant::GeneratorRefiner, Variant::Full];

impl AblationReport {
    pub fn row(&self, v: Variant) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == v && r.label == v.label())
    }

    /// Seeds (by position) where the four variants are ordered
    /// non-decreasingly in PSNR.
    pub fn ordered_seeds(&self) -> usize {
        (0..self.seeds.len())
            .filter(|&s| {
                let vals: Option<Vec<f64>> = ABLATION_ORDER.iter().map(|v| self.row(*v).and_then(|r| r.psnr.get(s).copied())).collect();
                vals.is_some_and(|v| v.windows(2).all(|w| w[0] <= w[1]))
            })
            .count()
    }

    /// Aligned plain-text table.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let head: Vec<String> = self.seeds.iter().map(|s| format!("seed {s}")).collect();
        out.push_str(&format!("{:<28} {:>9} {}\n", "variant", "mean PSNR", head.iter().map(|h| format!("{h:>9}")).collect::<Vec<_>>().join(" ")));
        let fmt_row = |label: &str, vals: &[f64], m: Option<f64>| {
            let cells: Vec<String> = (0..self.seeds.len())
                .map(|i| vals.get(i).map(|v| format!("{v:>9.3}")).unwrap_or_else(|| format!("{:>9}", "skipped")))
                .collect();
            let m = m.map(|v| format!("{v:>9.3}")).unwrap_or_else(|| format!("{:>9}", "-"));
            format!("{label:<28} {m} {}\n", cells.join(" "))
        };
        out.push_str(&fmt_row("baseline (before)", &self.baseline_psnr, (!self.baseline_psnr.is_empty()).then(|| mean(self.baseline_psnr.iter().copied()))));
        for r in &self.rows {
            out.push_str(&fmt_row(&r.label, &r.psnr, r.mean_psnr()));
        }
        if !self.complete {
            out.push_str("(partial: budget exhausted)\n");
        }
        out
    }
}

/// Frozen modules plus the evaluation subject, shared by every ablation run.
pub struct AblationInputs<'a> {
    pub dataset: &'a VideoDataset,
    pub refiner: &'a Refiner,
    pub examiner: &'a Examiner,
}

/// Trains one baseline per seed, fine-tunes every variant from it with the
/// same seed, and evaluates on the held-out frames. Extra pose-variance
/// sweep rows run the full pipeline.
pub fn run_ablation(cfg: &Config, inputs: &AblationInputs) -> Result<AblationReport> {
    let start = Instant::now();
    let budget = cfg.ablation.budget_minutes * 60.0;
    let over = || budget > 0.0 && start.elapsed().as_secs_f64() > budget;
    let mut runs: Vec<(String, Variant, f64)> = ABLATION_ORDER
        .iter()
        .map(|v| (v.label().to_string(), *v, cfg.generator.pose_variance))
        .collect();
    for &s in &cfg.ablation.pose_variance_sweep {
        runs.push((format!("{} Σ={s}", Variant::Full.label()), Variant::Full, s));
    }
    let mut rows: Vec<AblationRow> = runs
        .iter()
        .map(|(label, v, pv)| AblationRow {
            label: label.clone(),
            variant: *v,
            pose_variance: *pv,
            psnr: Vec::new(),
            ssim: Vec::new(),
            status: Vec::new(),
        })
        .collect();
    let modules = Modules { refiner: Some(inputs.refiner), examiner: Some(inputs.examiner) };
    let mut baseline_psnr = Vec::new();
    let mut complete = true;
    for &seed in &cfg.ablation.seeds {
        if over() {
            complete = false;
            for r in &mut rows {
                r.status.push(RunStatus::Skipped);
            }
            continue;
        }
        let (base, _) = fit_baseline(cfg, inputs.dataset, seed)?;
        baseline_psnr.push(evaluate(&base, inputs.dataset, Split::Test, cfg, seed)?.mean_psnr);
        for (row, (_, variant, pv)) in rows.iter_mut().zip(&runs) {
            if over() {
                complete = false;
                row.status.push(RunStatus::Skipped);
                continue;
            }
            let mut c = cfg.clone();
            c.augment.variant = *variant;
            c.generator.pose_variance = *pv;
            let model = base.duplicate()?;
            augmented_finetune(&model, inputs.dataset, modules, &c, seed)?;
            let rep = evaluate(&model, inputs.dataset, Split::Test, cfg, seed)?;
            log::info!("seed {seed} {}: {:.3} dB", row.label, rep.mean_psnr);
            row.psnr.push(rep.mean_psnr);
            row.ssim.push(rep.mean_ssim);
            row.status.push(RunStatus::Done);
        }
    }
    Ok(AblationReport {
        config_hash: cfg.hash(),
        seeds: cfg.ablation.seeds.clone(),
        baseline_psnr,
        rows,
        complete,
    })
}

/// Evaluation subject, loading it from disk.
pub fn load_eval(root: &Path) -> Result<VideoDataset> {
    VideoDataset::load(root, EVAL_SUBJECT)
}
