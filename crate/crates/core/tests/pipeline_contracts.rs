//! Fine-tuning schedule contracts and evaluation on a tiny clip.

use trioman::config::{Config, Variant};
use trioman::dataset::{synthesize_subject_video, Split, VideoDataset, EVAL_SUBJECT};
use trioman::examiner::Examiner;
use trioman::metrics::PSNR_CAP;
use trioman::nn::PerceptualProxy;
use trioman::pipeline::{augmented_finetune, crop_metrics, evaluate, new_avatar, Branch, FinetuneTrace, Modules};
use trioman::refiner::Refiner;

fn tiny() -> Config {
    Config::from_toml_str(
        r#"
[data]
height = 32
width = 24
clip_length = 8
held_out_subjects = 1
radial_segments = 8

[avatar]
grid = 8
feature_dim = 4
hidden = 8

[crop]
height = 24
width = 16
examiner_side = 16

[refiner]
channels = 4
codec_width = 8
widths = [8, 16]
attention_levels = 1
heads = 2

[examiner]
dim = 16
layers = 1
heads = 2
block_channels = [8, 8]
"#,
    )
    .unwrap()
}

struct Fixture {
    cfg: Config,
    ds: VideoDataset,
    refiner: Refiner,
    examiner: Examiner,
}

fn fixture() -> Fixture {
    let cfg = tiny();
    Fixture {
        ds: synthesize_subject_video(&cfg.data, EVAL_SUBJECT, 1).unwrap(),
        refiner: Refiner::new(&cfg.refiner, 1).unwrap(),
        examiner: Examiner::new(&cfg.examiner, cfg.crop.examiner_side, 1).unwrap(),
        cfg,
    }
}

fn finetune(f: &Fixture, variant: Variant, p: f64, steps: usize) -> (FinetuneTrace, String) {
    let mut cfg = f.cfg.clone();
    cfg.augment.variant = variant;
    cfg.augment.pseudo_gt_probability = p;
    cfg.augment.steps = steps;
    let model = new_avatar(&cfg, &f.ds, 3).unwrap();
    let modules = Modules { refiner: Some(&f.refiner), examiner: Some(&f.examiner) };
    let trace = augmented_finetune(&model, &f.ds, modules, &cfg, 11).unwrap();
    (trace, model.fingerprint().unwrap())
}

#[test]
fn zero_probability_reproduces_continued_training() {
    let f = fixture();
    let (continued, fp) = finetune(&f, Variant::Continued, 0.5, 10);
    assert_eq!(continued.count(Branch::Gt), 10);
    for v in [Variant::Generator, Variant::GeneratorRefiner, Variant::Full] {
        let (t, fpv) = finetune(&f, v, 0.0, 10);
        assert_eq!(t.losses(), continued.losses(), "{}", v.label());
        assert_eq!(fpv, fp);
    }
}

#[test]
fn branch_frequency_matches_probability() {
    let f = fixture();
    let (t, _) = finetune(&f, Variant::Generator, 0.3, 200);
    let pseudo = t.count(Branch::Pseudo) + t.count(Branch::Fallback);
    // Binomial(200, 0.3): mean 60, σ ≈ 6.5.
    assert!((35..=85).contains(&pseudo), "{pseudo} pseudo steps");
    assert_eq!(pseudo + t.count(Branch::Gt), 200);
    let (all, _) = finetune(&f, Variant::Generator, 1.0, 20);
    assert_eq!(all.count(Branch::Gt), 0);
}

#[test]
fn pseudo_variants_share_the_gt_schedule() {
    let f = fixture();
    let (gen, _) = finetune(&f, Variant::Generator, 0.5, 16);
    let (genref, _) = finetune(&f, Variant::GeneratorRefiner, 0.5, 16);
    let (full, _) = finetune(&f, Variant::Full, 0.5, 16);
    assert!(gen.count(Branch::Pseudo) > 0);
    assert_eq!(gen.gt_schedule(), genref.gt_schedule());
    assert_eq!(gen.gt_schedule(), full.gt_schedule());
    // Until the first pseudo step the runs are the same run.
    let first = gen.steps.iter().position(|s| s.branch != Branch::Gt).unwrap();
    assert_eq!(gen.losses()[..first], full.losses()[..first]);
    // Only the full pipeline records examiner scores.
    assert!(full.steps.iter().any(|s| s.score.is_some()));
    assert!(gen.steps.iter().chain(&genref.steps).all(|s| s.score.is_none()));
}

#[test]
fn modules_stay_frozen_during_finetuning() {
    let f = fixture();
    let (r0, e0) = (f.refiner.fingerprint().unwrap(), f.examiner.fingerprint().unwrap());
    finetune(&f, Variant::Full, 1.0, 4);
    assert_eq!(f.refiner.fingerprint().unwrap(), r0);
    assert_eq!(f.examiner.fingerprint().unwrap(), e0);
}

#[test]
fn missing_modules_are_validation_errors() {
    let f = fixture();
    let model = new_avatar(&f.cfg, &f.ds, 3).unwrap();
    let mut cfg = f.cfg.clone();
    cfg.augment.variant = Variant::Full;
    let err = augmented_finetune(&model, &f.ds, Modules { refiner: Some(&f.refiner), examiner: None }, &cfg, 1).unwrap_err();
    assert!(err.is_validation());
}

#[test]
fn evaluation_is_deterministic_and_capped_on_ground_truth() {
    let f = fixture();
    let model = new_avatar(&f.cfg, &f.ds, 3).unwrap();
    let a = evaluate(&model, &f.ds, Split::Test, &f.cfg, 2).unwrap();
    let b = evaluate(&model, &f.ds, Split::Test, &f.cfg, 2).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    let tests = f.ds.frames.iter().filter(|fr| fr.split == Split::Test).count();
    assert_eq!(a.frames.len(), tests);
    let mean = a.frames.iter().map(|m| m.psnr).sum::<f64>() / tests as f64;
    assert!((mean - a.mean_psnr).abs() < 1e-12);

    let proxy = PerceptualProxy::new(candle_core::DType::F32).unwrap();
    let fr = &f.ds.frames[0];
    let (p, s, d) = crop_metrics(&fr.image, &fr.image, &fr.mask, &f.cfg, &proxy).unwrap();
    assert_eq!(p, PSNR_CAP);
    assert!((s - 1.0).abs() < 1e-12);
    assert!(d.abs() < 1e-9);
}

#[test]
fn config_hash_is_frozen() {
    // Any change to defaults or hashing shows up here and must be deliberate.
    let h = Config::default().hash();
    assert_eq!(h.len(), 16);
    assert_eq!(h, FROZEN_DEFAULT_HASH);
}

const FROZEN_DEFAULT_HASH: &str = "a5b9f4136c3f648a";
