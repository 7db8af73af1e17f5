//! Acceptance suite. Each test prints one `criterion N: PASS|FAIL ...` line
//! before asserting, so `cargo test -- --nocapture` doubles as a report.
//!
//! Criteria 5 to 7 share one desk-scale fixture (synthetic subjects,
//! baselines, refiner and examiner) built on first use.

use std::io::Write;
use std::path::PathBuf;
use std::process::Command;
use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::Instant;

use rand::Rng as _;
use trioman::body::{pose_mesh, BodyMesh, PoseVector, Skeleton};
use trioman::camera::CameraPose;
use trioman::config::{Config, PerturbationConfig, Variant};
use trioman::dataset::{self, RefinerSample, Split, TripletSet, VideoDataset};
use trioman::examiner::{auc, pair_scores, Examiner};
use trioman::generator::sample_pose_perturbation;
use trioman::image::Image;
use trioman::metrics::{gaussian_taps, psnr, ssim, PSNR_CAP};
use trioman::pipeline::{self, AblationInputs, AblationReport, Modules};
use trioman::refiner::{crop_psnr, Refiner};
use trioman::rng::{self, Rng};
use trioman::splat::{composite, project_gaussians, render_backward, render_detailed, GaussianCloud, Splat2D, ALPHA_SKIP};

/// Writes straight to stderr so the line shows up even when the harness
/// captures test output.
fn report(n: u32, pass: bool, detail: String) {
    let line = format!("criterion {n}: {} {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
}

// ---------------------------------------------------------------- 1: LBS

type M3 = [[f64; 3]; 3];

fn mul(a: &M3, b: &M3) -> M3 {
    let mut o = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            o[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    o
}

fn apply(a: &M3, v: [f64; 3]) -> [f64; 3] {
    [0, 1, 2].map(|i| a[i][0] * v[0] + a[i][1] * v[1] + a[i][2] * v[2])
}

fn rot(axis: usize, t: f64) -> M3 {
    let (s, c) = t.sin_cos();
    let (i, j) = ((axis + 1) % 3, (axis + 2) % 3);
    let mut m = [[0.0; 3]; 3];
    m[axis][axis] = 1.0;
    m[i][i] = c;
    m[j][j] = c;
    m[i][j] = -s;
    m[j][i] = s;
    m
}

/// World rotation and translation of joint `j`, walking up to the root.
fn joint_world(sk: &Skeleton, pose: &[f64], j: usize) -> (M3, [f64; 3]) {
    let lim = sk.rotation_axis_limits[j];
    let local = mul(&mul(&rot(0, pose[3 * j] * lim[0]), &rot(1, pose[3 * j + 1] * lim[1])), &rot(2, pose[3 * j + 2] * lim[2]));
    let off = sk.rest_offsets[j];
    if sk.parents[j] < 0 {
        return (local, off);
    }
    let (pr, pt) = joint_world(sk, pose, sk.parents[j] as usize);
    let o = apply(&pr, off);
    (mul(&pr, &local), [pt[0] + o[0], pt[1] + o[1], pt[2] + o[2]])
}

fn rest_origin(sk: &Skeleton, mut j: i32) -> [f64; 3] {
    let mut p = [0.0; 3];
    while j >= 0 {
        let o = sk.rest_offsets[j as usize];
        p = [p[0] + o[0], p[1] + o[1], p[2] + o[2]];
        j = sk.parents[j as usize];
    }
    p
}

fn brute_force_lbs(sk: &Skeleton, mesh: &BodyMesh, pose: &[f64]) -> Vec<[f64; 3]> {
    let joints: Vec<_> = (0..sk.parents.len()).map(|j| (joint_world(sk, pose, j), rest_origin(sk, j as i32))).collect();
    (0..mesh.vertices.len())
        .map(|v| {
            let p = mesh.vertices[v];
            let mut acc = [0.0; 3];
            for (j, ((r, t), rest)) in joints.iter().enumerate() {
                let w = mesh.skin_weights[v * mesh.joint_count + j];
                let q = apply(r, [p[0] - rest[0], p[1] - rest[1], p[2] - rest[2]]);
                for k in 0..3 {
                    acc[k] += w * (q[k] + t[k]);
                }
            }
            acc
        })
        .collect()
}

#[test]
fn criterion_1_lbs_oracle() {
    let start = Instant::now();
    let mut r = rng::stream(21, "acceptance-lbs");
    let joints = 8;
    let verts = 200;
    let sk = Skeleton {
        parents: (0..joints).map(|j| if j == 0 { -1 } else { r.random_range(0..j) as i32 }).collect(),
        rest_offsets: (0..joints).map(|_| [0, 1, 2].map(|_| r.random_range(-0.4..0.4))).collect(),
        rotation_axis_limits: (0..joints).map(|_| [0, 1, 2].map(|_| r.random_range(0.2..2.5))).collect(),
    };
    let mut skin_weights = Vec::new();
    for _ in 0..verts {
        let row: Vec<f64> = (0..joints).map(|_| r.random::<f64>().powi(2)).collect();
        let s: f64 = row.iter().sum();
        skin_weights.extend(row.iter().map(|w| w / s));
    }
    let mesh = BodyMesh {
        vertices: (0..verts).map(|_| [0, 1, 2].map(|_| r.random_range(-1.0..1.0))).collect(),
        faces: vec![],
        skin_weights,
        joint_count: joints,
        vertex_colors: vec![[0.5; 3]; verts],
    };
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let pose: Vec<f64> = (0..3 * joints).map(|_| r.random_range(-1.0..=1.0)).collect();
        let got = pose_mesh(&sk, &mesh, &PoseVector(pose.clone())).unwrap();
        for (g, w) in got.iter().zip(brute_force_lbs(&sk, &mesh, &pose)) {
            for k in 0..3 {
                worst = worst.max((g[k] - w[k]).abs());
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst < 1e-6 && secs < 10.0;
    report(1, pass, format!("max abs error {worst:.2e} over 100 poses, {secs:.2}s"));
    assert!(pass);
}

// ---------------------------------------------------- 2: renderer gradients

fn random_cloud(r: &mut Rng, n: usize) -> GaussianCloud {
    let mut c = GaussianCloud::default();
    for _ in 0..n {
        c.push(
            [0, 1, 2].map(|_| r.random_range(-0.6..0.6)),
            [0, 1, 2].map(|_| r.random_range(-1.6..-0.7)),
            [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(0.3..1.0)],
            r.random_range(-1.0..2.0),
            [r.random(), r.random(), r.random()],
        );
    }
    c
}

const BG: [f64; 3] = [0.2, 0.1, 0.3];

fn weighted_sum(cloud: &GaussianCloud, cam: &CameraPose, weights: &[f64]) -> f64 {
    let out = render_detailed(cloud, cam, BG).unwrap();
    out.color.iter().zip(weights).map(|(a, b)| a * b).sum()
}

/// Support-box and minimum-alpha decisions per (splat, pixel). They are
/// piecewise constant, so a finite difference that flips one is meaningless.
fn gates(cloud: &GaussianCloud, cam: &CameraPose) -> Vec<bool> {
    let proj = project_gaussians(cloud, cam).unwrap();
    let mut sig = Vec::new();
    for s in &proj.splats {
        for y in 0..cam.height {
            for x in 0..cam.width {
                let (dx, dy) = (x as f64 + 0.5 - s.mean[0], y as f64 + 0.5 - s.mean[1]);
                let m = s.conic[0] * dx * dx + 2.0 * s.conic[1] * dx * dy + s.conic[2] * dy * dy;
                sig.push(dx.abs() <= s.radius && dy.abs() <= s.radius && s.opacity * (-0.5 * m).exp() >= ALPHA_SKIP);
            }
        }
    }
    sig
}

#[test]
fn criterion_2_renderer_gradients() {
    let start = Instant::now();
    let cam = CameraPose::new(20.0, 10.0, 3.0, 8, 8);
    let mut r = rng::stream(22, "acceptance-fd");
    let h = 1e-3;
    let mut worst: f64 = 0.0;
    let mut trials = 0;
    while trials < 20 {
        let cloud = random_cloud(&mut r, 3);
        let weights: Vec<f64> = (0..8 * 8 * 3).map(|_| r.random_range(-1.0..1.0)).collect();
        let base = gates(&cloud, &cam);
        let packed = cloud.to_packed();
        let mut fd = Vec::with_capacity(packed.len());
        let mut stable = true;
        for i in 0..packed.len() {
            let mut p = packed.clone();
            p[i] += h;
            let plus = GaussianCloud::from_packed(&p).unwrap();
            p[i] -= 2.0 * h;
            let minus = GaussianCloud::from_packed(&p).unwrap();
            if gates(&plus, &cam) != base || gates(&minus, &cam) != base {
                stable = false;
                break;
            }
            fd.push((weighted_sum(&plus, &cam, &weights) - weighted_sum(&minus, &cam, &weights)) / (2.0 * h));
        }
        if !stable {
            continue;
        }
        trials += 1;
        let grad = render_backward(&cloud, &cam, BG, &weights).unwrap().to_packed();
        for (a, e) in grad.iter().zip(&fd) {
            worst = worst.max((a - e).abs() / e.abs().max(1e-2));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst < 1e-2 && secs < 60.0;
    report(2, pass, format!("worst relative error {worst:.2e} over 20 trials (means, scales, rotations, opacities, colors), {secs:.2}s"));
    assert!(pass);
}

// --------------------------------------------------------- 3: compositing

fn brute_force_composite(splats: &[Splat2D], h: usize, w: usize, bg: [f64; 3]) -> Vec<f64> {
    let mut out = vec![0.0; h * w * 3];
    for y in 0..h {
        for x in 0..w {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let mut hits: Vec<&Splat2D> = splats
                .iter()
                .filter(|s| (px - s.mean[0]).abs() <= s.radius && (py - s.mean[1]).abs() <= s.radius)
                .collect();
            hits.sort_by(|a, b| a.depth.total_cmp(&b.depth).then(a.index.cmp(&b.index)));
            let (mut t, mut c) = (1.0, [0.0; 3]);
            for s in hits {
                let [a, b, d] = s.cov;
                let (dx, dy) = (px - s.mean[0], py - s.mean[1]);
                let m = (d * dx * dx - 2.0 * b * dx * dy + a * dy * dy) / (a * d - b * b);
                let alpha = s.opacity * (-0.5 * m).exp();
                if alpha < ALPHA_SKIP {
                    continue;
                }
                for k in 0..3 {
                    c[k] += s.color[k] * alpha * t;
                }
                t *= 1.0 - alpha;
            }
            for k in 0..3 {
                out[(y * w + x) * 3 + k] = c[k] + t * bg[k];
            }
        }
    }
    out
}

#[test]
fn criterion_3_compositing_oracle() {
    let mut r = rng::stream(23, "acceptance-composite");
    let mut worst: f64 = 0.0;
    let instances = 120;
    for trial in 0..instances {
        let (h, w) = (6 + trial % 5, 7 + trial % 4);
        let n = 1 + trial % 7;
        let splats: Vec<Splat2D> = (0..n)
            .map(|index| {
                let sx: f64 = r.random_range(0.4..3.0);
                let sy: f64 = r.random_range(0.4..3.0);
                let rho: f64 = r.random_range(-0.8..0.8);
                let cov = [sx * sx, rho * sx * sy, sy * sy];
                let det = cov[0] * cov[2] - cov[1] * cov[1];
                let lmax = 0.5 * (cov[0] + cov[2]) + (0.25 * (cov[0] - cov[2]).powi(2) + cov[1] * cov[1]).sqrt();
                Splat2D {
                    index,
                    mean: [r.random_range(-1.0..w as f64 + 1.0), r.random_range(-1.0..h as f64 + 1.0)],
                    cov,
                    conic: [cov[2] / det, -cov[1] / det, cov[0] / det],
                    radius: 3.0 * lmax.sqrt(),
                    // Coarse depths force ties, which must break by index.
                    depth: (r.random_range(0.5..5.0f64) * 2.0).round() / 2.0,
                    color: [r.random(), r.random(), r.random()],
                    opacity: r.random_range(0.05..0.99),
                }
            })
            .collect();
        let bg = [r.random(), r.random(), r.random()];
        let got = composite(&splats, h, w, bg);
        for (g, e) in got.data.iter().zip(brute_force_composite(&splats, h, w, bg)) {
            worst = worst.max((*g as f64 - e).abs());
        }
    }
    let pass = worst < 1e-5;
    report(3, pass, format!("max abs difference {worst:.2e} over {instances} instances"));
    assert!(pass);
}

// ------------------------------------------------- 4: generator statistics

#[test]
fn criterion_4_generator_statistics() {
    let start = Instant::now();
    let cfg = PerturbationConfig::default();
    let mut r = rng::stream(24, "acceptance-generator");
    let entries = 9;
    let zero = PoseVector::zeros(entries / 3);
    let n = 100_000;
    let (mut sum, mut sq) = (vec![0.0; entries], vec![0.0; entries]);
    for _ in 0..n {
        let p = sample_pose_perturbation(&zero, &cfg, &mut r);
        for k in 0..entries {
            sum[k] += p.0[k];
            sq[k] += p.0[k] * p.0[k];
        }
    }
    let mut worst_mean: f64 = 0.0;
    let mut worst_var: f64 = 0.0;
    for k in 0..entries {
        let m = sum[k] / n as f64;
        worst_mean = worst_mean.max(m.abs());
        worst_var = worst_var.max(((sq[k] / n as f64 - m * m) / 0.03 - 1.0).abs());
    }
    // At the bounds half the draws push outward and must land exactly on them.
    let edge = PoseVector(vec![1.0, -1.0, 1.0]);
    let (mut hi, mut lo, mut inside) = (0usize, 0usize, true);
    for _ in 0..10_000 {
        let p = sample_pose_perturbation(&edge, &cfg, &mut r);
        inside &= p.0.iter().all(|v| (-1.0..=1.0).contains(v));
        hi += (p.0[0] == 1.0) as usize;
        lo += (p.0[1] == -1.0) as usize;
    }
    let saturates = inside && (4_500..5_500).contains(&hi) && (4_500..5_500).contains(&lo);
    let secs = start.elapsed().as_secs_f64();
    let pass = cfg.pose_variance == 0.03 && worst_mean <= 0.005 && worst_var <= 0.1 && saturates && secs < 30.0;
    report(
        4,
        pass,
        format!("max |mean| {worst_mean:.4}, max relative variance error {:.1}%, saturation {hi}/{lo} of 10000, {secs:.2}s", worst_var * 100.0),
    );
    assert!(pass);
}

// ------------------------------------------------------ 8: metric oracles

fn psnr_oracle(a: &Image, b: &Image) -> f64 {
    let n = a.data.len() as f64;
    let mse: f64 = a.data.iter().zip(&b.data).map(|(x, y)| (*x as f64 - *y as f64).powi(2)).sum::<f64>() / n;
    -10.0 * mse.log10()
}

/// Direct per-window SSIM with an explicit 2D Gaussian window.
fn ssim_oracle(a: &Image, b: &Image) -> f64 {
    let taps = gaussian_taps(11, 1.5);
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let (h, w) = (a.height, a.width);
    let mut total = 0.0;
    let mut count = 0.0;
    for ch in 0..3 {
        for y0 in 0..=h - 11 {
            for x0 in 0..=w - 11 {
                let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for dy in 0..11 {
                    for dx in 0..11 {
                        let g = taps[dy] * taps[dx];
                        let va = a.pixel(y0 + dy, x0 + dx)[ch] as f64;
                        let vb = b.pixel(y0 + dy, x0 + dx)[ch] as f64;
                        ma += g * va;
                        mb += g * vb;
                        saa += g * va * va;
                        sbb += g * vb * vb;
                        sab += g * va * vb;
                    }
                }
                let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
                total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1.0;
            }
        }
    }
    total / count
}

#[test]
fn criterion_8_metric_oracles() {
    let mut r = rng::stream(28, "acceptance-metrics");
    let (mut psnr_err, mut ssim_err): (f64, f64) = (0.0, 0.0);
    for trial in 0..20 {
        let (h, w) = (11 + trial % 9, 11 + (trial * 7) % 13);
        let base: Vec<f32> = (0..h * w * 3).map(|_| r.random()).collect();
        let noise = r.random_range(0.01..0.3f32);
        let jitter: Vec<f32> = (0..h * w * 3).map(|_| noise * (r.random::<f32>() - 0.5)).collect();
        let at = |v: &[f32], y: usize, x: usize| -> [f32; 3] { [0, 1, 2].map(|k| v[(y * w + x) * 3 + k]) };
        let a = Image::from_fn(h, w, |y, x| at(&base, y, x));
        let b = Image::from_fn(h, w, |y, x| {
            let (p, d) = (at(&base, y, x), at(&jitter, y, x));
            [0, 1, 2].map(|k| (p[k] + d[k]).clamp(0.0, 1.0))
        });
        psnr_err = psnr_err.max((psnr(&a, &b).unwrap() - psnr_oracle(&a, &b)).abs());
        ssim_err = ssim_err.max((ssim(&a, &b).unwrap() - ssim_oracle(&a, &b)).abs());
    }
    let img = Image::from_fn(16, 16, |y, x| [(y as f32) / 16.0, (x as f32) / 16.0, 0.5]);
    let cap = psnr(&img, &img).unwrap() == PSNR_CAP;
    let one = (ssim(&img, &img).unwrap() - 1.0).abs() < 1e-12;
    let pass = psnr_err < 1e-9 && ssim_err < 1e-6 && cap && one;
    report(8, pass, format!("PSNR error {psnr_err:.1e}, SSIM error {ssim_err:.1e}, identical images give cap {cap} and SSIM 1 {one}"));
    assert!(pass);
}

// ------------------------------------------------- 9: CLI determinism

fn tiny_config(dir: &std::path::Path) -> PathBuf {
    let p = dir.join("config.toml");
    std::fs::write(&p, include_str!("fixtures/tiny.toml")).unwrap();
    p
}

fn run_cli(cfg: &std::path::Path, args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_trioman"))
        .arg(args[0])
        .arg("--config")
        .arg(cfg)
        .args(["--seed", "11"])
        .args(&args[1..])
        .env_remove("TRIOMAN_DATA_DIR")
        .env("RUST_LOG", "warn")
        .status()
        .unwrap()
        .success()
}

fn pipeline_outputs(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let cfg = tiny_config(dir);
    let ft = dir.join("data/models/eval/finetuned-full.ckpt");
    let png = dir.join("data/frame.png");
    let stages: Vec<Vec<&str>> = vec![
        vec!["synth-data"],
        vec!["train-baseline"],
        vec!["build-triplets"],
        vec!["train-refiner"],
        vec!["train-examiner"],
        vec!["finetune-augmented"],
        vec!["evaluate"],
        vec!["evaluate", "--checkpoint", ft.to_str().unwrap()],
        vec!["render", "--frame", "2", "--output", png.to_str().unwrap()],
        vec!["run-ablation"],
    ];
    for s in &stages {
        assert!(run_cli(&cfg, s), "stage {s:?} failed");
    }
    let mut files = Vec::new();
    let mut stack = vec![dir.join("data")];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if !p.to_string_lossy().ends_with(".timing.json") {
                files.push((p.strip_prefix(dir).unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn criterion_9_determinism() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let fa = pipeline_outputs(a.path());
    let fb = pipeline_outputs(b.path());
    let manifests = fa.iter().filter(|(p, _)| p.ends_with("manifest.json")).count();
    let reports = fa.iter().filter(|(p, _)| p.contains("reports/")).count();
    let differing: Vec<&str> = fa
        .iter()
        .zip(&fb)
        .filter(|((pa, da), (pb, db))| pa != pb || da != db)
        .map(|((p, _), _)| p.as_str())
        .collect();
    let pass = fa.len() == fb.len() && differing.is_empty() && manifests > 0 && reports > 0;
    report(
        9,
        pass,
        format!("{} artifacts ({manifests} manifests, {reports} reports) compared byte-for-byte, differing: {differing:?}", fa.len()),
    );
    assert!(pass);
}

// -------------------------------------------------- 10: degeneration

#[test]
fn criterion_10_degeneration() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = Config::load(&tiny_config(dir.path())).unwrap();
    cfg.augment.steps = 12;
    let ds = dataset::synthesize_subject_video(&cfg.data, dataset::EVAL_SUBJECT, 5).unwrap();
    let base = pipeline::new_avatar(&cfg, &ds, 5).unwrap();
    let run = |variant: Variant, p: f64| {
        let mut c = cfg.clone();
        c.augment.variant = variant;
        c.augment.pseudo_gt_probability = p;
        let m = base.duplicate().unwrap();
        let trace = pipeline::augmented_finetune(&m, &ds, Modules { refiner: None, examiner: None }, &c, 9).unwrap();
        (trace.losses(), m.fingerprint().unwrap())
    };
    let (continued, fp_c) = run(Variant::Continued, 0.5);
    let mut identical = true;
    for v in [Variant::Generator, Variant::Continued] {
        let (losses, fp) = run(v, 0.0);
        identical &= losses == continued && fp == fp_c;
    }
    report(10, identical, format!("{} loss values and final parameters compared for p = 0", continued.len()));
    assert!(identical);
}

// ------------------------------------------- desk fixture for 5, 6 and 7

const DESK_SEED: u64 = 7;

struct Desk {
    cfg: Config,
    eval: VideoDataset,
    eval_set: TripletSet,
    aux: Vec<TripletSet>,
    refiner: Refiner,
    examiner: Examiner,
    setup_minutes: f64,
    refiner_minutes: f64,
}

/// The desk criteria train models; running them one at a time keeps their
/// wall-clock numbers meaningful on a single core.
static HEAVY: Mutex<()> = Mutex::new(());

fn heavy() -> MutexGuard<'static, ()> {
    HEAVY.lock().unwrap_or_else(|e| e.into_inner())
}

fn desk_config() -> Config {
    Config::from_toml_str(include_str!("fixtures/desk.toml")).unwrap()
}

fn desk() -> &'static Desk {
    static DESK: OnceLock<Desk> = OnceLock::new();
    DESK.get_or_init(|| {
        let start = Instant::now();
        let cfg = desk_config();
        let mut eval = None;
        let mut sets = Vec::new();
        for name in dataset::subject_names(&cfg.data) {
            let ds = dataset::synthesize_subject_video(&cfg.data, &name, DESK_SEED).unwrap();
            let (model, _) = pipeline::fit_baseline(&cfg, &ds, DESK_SEED).unwrap();
            sets.push(dataset::build_triplets(&ds, &model).unwrap());
            if name == dataset::EVAL_SUBJECT {
                eval = Some(ds);
            }
        }
        let eval_set = sets.remove(0);
        let t = Instant::now();
        let (refiner, _) = pipeline::fit_refiner(&cfg, &sets, DESK_SEED).unwrap();
        let refiner_minutes = t.elapsed().as_secs_f64() / 60.0;
        let (examiner, _) = pipeline::fit_examiner(&cfg, &sets, DESK_SEED).unwrap();
        Desk {
            cfg,
            eval: eval.unwrap(),
            eval_set,
            aux: sets,
            refiner,
            examiner,
            setup_minutes: start.elapsed().as_secs_f64() / 60.0,
            refiner_minutes,
        }
    })
}

/// Refiner samples on the evaluation subject, whose frames the refiner never
/// saw; targets are its held-out test frames.
fn held_out_refiner_samples(d: &Desk, count: usize) -> Vec<RefinerSample> {
    let mut r = rng::stream(DESK_SEED, "acceptance-heldout");
    let tests: Vec<usize> = (0..d.eval_set.len()).filter(|&t| d.eval_set.triplets[t].split == Split::Test).collect();
    (0..count)
        .map(|_| {
            let t = tests[r.random_range(0..tests.len())];
            let k = dataset::sample_offset(t, d.eval_set.len(), d.cfg.refiner.max_offset, &mut r).unwrap();
            dataset::assemble_refiner_sample(&d.eval_set, t, k, &d.cfg.crop).unwrap()
        })
        .collect()
}

#[test]
fn criterion_5_refiner_improvement() {
    let _guard = heavy();
    let d = desk();
    let start = Instant::now();
    let held = held_out_refiner_samples(d, 64);
    let (coarse, refined) = crop_psnr(&d.refiner, &held).unwrap();
    let mut cfg = d.cfg.clone();
    cfg.refiner.use_texture = false;
    cfg.refiner.use_geometry = false;
    let (unconditioned, _) = pipeline::fit_refiner(&cfg, &d.aux, DESK_SEED).unwrap();
    let (_, refined_nc) = crop_psnr(&unconditioned, &held).unwrap();
    let gain = refined - coarse;
    let gain_nc = refined_nc - coarse;
    let pass = gain >= 0.5 && gain_nc < gain && d.refiner_minutes <= 30.0;
    report(
        5,
        pass,
        format!(
            "coarse {coarse:.2} dB, refined {refined:.2} dB (gain {gain:+.2}), without condition gain {gain_nc:+.2}; refiner training {:.1} min, variant {:.1} min",
            d.refiner_minutes,
            start.elapsed().as_secs_f64() / 60.0
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_6_examiner_discrimination() {
    let _guard = heavy();
    let d = desk();
    let mut r = rng::stream(DESK_SEED, "acceptance-examiner");
    let pool = pipeline::examiner_pool(std::slice::from_ref(&d.eval_set), &d.cfg, 128, &mut r).unwrap();
    let (real, coarse) = pair_scores(&d.examiner, &pool).unwrap();
    let a = auc(&real, &coarse).unwrap();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mr, mc) = (mean(&real), mean(&coarse));
    let pass = a >= 0.9 && mr > 0.7 && mc < 0.3;
    report(6, pass, format!("held-out AUC {a:.3}, mean real-pair score {mr:.3}, mean coarse-pair score {mc:.3}"));
    assert!(pass);
}

#[test]
fn criterion_7_ablation_trend() {
    let _guard = heavy();
    let d = desk();
    let start = Instant::now();
    let ablation: AblationReport =
        pipeline::run_ablation(&d.cfg, &AblationInputs { dataset: &d.eval, refiner: &d.refiner, examiner: &d.examiner }).unwrap();
    print!("{}", ablation.table());
    let ordered = ablation.ordered_seeds();
    let full = ablation.row(Variant::Full).and_then(|r| r.mean_psnr()).unwrap_or(f64::NAN);
    let cont = ablation.row(Variant::Continued).and_then(|r| r.mean_psnr()).unwrap_or(f64::NAN);
    let hours = (start.elapsed().as_secs_f64() / 60.0 + d.setup_minutes) / 60.0;
    let pass = ablation.complete && ordered >= 2 && full - cont >= 0.3 && hours <= 2.0;
    report(
        7,
        pass,
        format!(
            "ordered in {ordered}/{} seeds, full {full:.3} dB vs continued {cont:.3} dB ({:+.3}), {hours:.2} h",
            ablation.seeds.len(),
            full - cont
        ),
    );
    assert!(pass);
}
