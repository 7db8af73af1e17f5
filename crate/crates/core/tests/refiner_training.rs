//! Refiner training behaviour on a toy set of smooth synthetic crops.

use candle_core::{Device, Tensor};
use rand::Rng as _;
use trioman::checkpoint::Checkpoint;
use trioman::config::RefinerConfig;
use trioman::dataset::RefinerSample;
use trioman::image::{Image, Rect};
use trioman::metrics::psnr;
use trioman::refiner::{max_abs_diff, train_refiner, Refiner};
use trioman::rng;

const H: usize = 24;
const W: usize = 16;

fn toy_config() -> RefinerConfig {
    RefinerConfig {
        channels: 8,
        codec_width: 16,
        widths: vec![8, 16],
        attention_levels: 1,
        heads: 2,
        codec_steps: 0,
        steps: 0,
        batch_size: 4,
        learning_rate: 2e-3,
        ..RefinerConfig::default()
    }
}

fn blob(r: &mut rng::Rng) -> Image {
    let c0 = [r.random::<f32>(), r.random(), r.random()];
    let c1 = [r.random::<f32>(), r.random(), r.random()];
    let (fy, fx) = (r.random_range(0.1..0.4f32), r.random_range(0.1..0.4f32));
    Image::from_fn(H, W, |y, x| {
        let t = 0.5 + 0.5 * ((y as f32 * fy).sin() * (x as f32 * fx).cos());
        [0, 1, 2].map(|k| c0[k] * t + c1[k] * (1.0 - t))
    })
}

/// Targets are smooth patterns; coarse inputs are darkened and flattened
/// copies; the texture condition is the target itself, so a conditioned
/// refiner has strictly more to go on.
fn toy_set(n: usize, seed: u64) -> Vec<RefinerSample> {
    let mut r = rng::stream(seed, "toy-refiner");
    (0..n)
        .map(|i| {
            let target = blob(&mut r);
            let coarse = Image::from_fn(H, W, |y, x| target.pixel(y, x).map(|v| 0.3 + 0.4 * v));
            let geometry = blob(&mut r);
            RefinerSample {
                texture: target.clone(),
                target,
                coarse,
                geometry,
                index: i,
                offset: 1,
                rect: Rect { top: 0, left: 0, height: H, width: W },
            }
        })
        .collect()
}

fn tensor(img: &Image) -> Tensor {
    img.to_tensor(&Device::Cpu).unwrap().unsqueeze(0).unwrap()
}

#[test]
fn joint_loss_drops_on_a_toy_set() {
    let samples = toy_set(16, 1);
    let mut cfg = toy_config();
    cfg.codec_steps = 40;
    cfg.steps = 200;
    let mut r = Refiner::new(&cfg, 2).unwrap();
    let report = train_refiner(&mut r, &samples, 3).unwrap();
    assert_eq!(report.codec.len(), 40);
    assert_eq!(report.joint.len(), 200);
    let head: f64 = report.joint[..10].iter().sum::<f64>() / 10.0;
    let tail: f64 = report.joint[190..].iter().sum::<f64>() / 10.0;
    assert!(tail < 0.7 * head, "joint loss {head} -> {tail}");
    assert_eq!(r.steps_trained(), 240);
}

#[test]
fn zero_steps_keep_the_initialization() {
    let cfg = toy_config();
    let mut r = Refiner::new(&cfg, 5).unwrap();
    let before = r.fingerprint().unwrap();
    let report = train_refiner(&mut r, &toy_set(4, 2), 6).unwrap();
    assert!(report.codec.is_empty() && report.joint.is_empty());
    assert_eq!(r.fingerprint().unwrap(), before);
    assert_eq!(before, Refiner::new(&cfg, 5).unwrap().fingerprint().unwrap());
    assert_ne!(before, Refiner::new(&cfg, 6).unwrap().fingerprint().unwrap());
}

#[test]
fn training_is_deterministic() {
    let samples = toy_set(8, 3);
    let mut cfg = toy_config();
    cfg.codec_steps = 5;
    cfg.steps = 5;
    let run = || {
        let mut r = Refiner::new(&cfg, 1).unwrap();
        let rep = train_refiner(&mut r, &samples, 9).unwrap();
        (rep, r.fingerprint().unwrap())
    };
    assert_eq!(run(), run());
}

#[test]
fn trained_refiner_reads_its_conditions() {
    let samples = toy_set(16, 4);
    let mut cfg = toy_config();
    cfg.codec_steps = 30;
    cfg.steps = 120;
    let mut r = Refiner::new(&cfg, 7).unwrap();
    train_refiner(&mut r, &samples, 8).unwrap();
    let s = &samples[0];
    let base = r.forward(&tensor(&s.coarse), &tensor(&s.texture), &tensor(&s.geometry)).unwrap();
    let other = &samples[1];
    // Swapping either condition view changes the refined coarse view.
    let tex_swapped = r.forward(&tensor(&s.coarse), &tensor(&other.texture), &tensor(&s.geometry)).unwrap();
    let geo_swapped = r.forward(&tensor(&s.coarse), &tensor(&s.texture), &tensor(&other.geometry)).unwrap();
    assert!(max_abs_diff(&base[0], &tex_swapped[0]).unwrap() > 1e-4);
    assert!(max_abs_diff(&base[0], &geo_swapped[0]).unwrap() > 1e-4);
    // Without attention the views never meet.
    let stack = r.encode(&tensor(&s.coarse), &tensor(&s.texture), &tensor(&s.geometry)).unwrap();
    let swapped = r.encode(&tensor(&s.coarse), &tensor(&other.texture), &tensor(&other.geometry)).unwrap();
    let a = r.decode(&r.denoise_with(&stack, false).unwrap()).unwrap();
    let b = r.decode(&r.denoise_with(&swapped, false).unwrap()).unwrap();
    assert!(max_abs_diff(&a[0], &b[0]).unwrap() < 1e-6);
    // Masking the conditions at inference also changes the output.
    let mut masked = r.clone();
    masked.set_conditions(false, false);
    let m = masked.forward(&tensor(&s.coarse), &tensor(&s.texture), &tensor(&s.geometry)).unwrap();
    assert!(max_abs_diff(&base[0], &m[0]).unwrap() > 1e-4);
}

#[test]
fn codec_warm_start_round_trips_images() {
    let samples = toy_set(16, 5);
    let mut cfg = toy_config();
    cfg.codec_steps = 300;
    cfg.steps = 0;
    let round_trip = |r: &Refiner| -> f64 {
        let mut total = 0.0;
        for s in &samples[..8] {
            let out = r.reconstruct(&tensor(&s.target), &tensor(&s.target), &tensor(&s.geometry)).unwrap();
            total += psnr(&Image::from_tensor(&out[0]).unwrap(), &s.target).unwrap();
        }
        total / 8.0
    };
    let mut r = Refiner::new(&cfg, 4).unwrap();
    let before = round_trip(&r);
    train_refiner(&mut r, &samples, 4).unwrap();
    let after = round_trip(&r);
    assert!(after > 20.0 && after > before + 8.0, "codec round trip {before:.2} -> {after:.2} dB");
}

#[test]
fn checkpoint_round_trip_preserves_outputs() {
    let samples = toy_set(4, 6);
    let mut cfg = toy_config();
    cfg.codec_steps = 3;
    cfg.steps = 3;
    let mut r = Refiner::new(&cfg, 2).unwrap();
    train_refiner(&mut r, &samples, 2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("refiner.ckpt");
    r.to_checkpoint("cafe", 2).unwrap().save(&path).unwrap();
    let back = Refiner::from_checkpoint(&Checkpoint::load_kind(&path, "refiner").unwrap()).unwrap();
    assert_eq!(back.fingerprint().unwrap(), r.fingerprint().unwrap());
    assert_eq!(back.steps_trained(), 6);
    let s = &samples[0];
    assert_eq!(
        r.refine_crops(&s.coarse, &s.texture, &s.geometry).unwrap(),
        back.refine_crops(&s.coarse, &s.texture, &s.geometry).unwrap()
    );
    assert!(Checkpoint::load_kind(&path, "examiner").is_err());
}
