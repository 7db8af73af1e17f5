//! Baseline training smoke checks on the procedural humanoid.

use candle_core::DType;
use trioman::avatar::{train_baseline, AvatarModel, Observation};
use trioman::body::{build_humanoid, HumanoidSpec, PoseVector};
use trioman::camera::CameraPose;
use trioman::config::{AvatarConfig, TrainConfig};

fn small_avatar() -> AvatarConfig {
    AvatarConfig {
        grid: 16,
        feature_dim: 8,
        hidden: 16,
        ..AvatarConfig::default()
    }
}

/// Four frames rendered by a differently seeded "teacher" avatar.
fn clip() -> (AvatarModel, Vec<Observation>) {
    let s = build_humanoid(&HumanoidSpec::default()).unwrap();
    let teacher = AvatarModel::new(s.skeleton.clone(), s.mesh.clone(), small_avatar(), 99, DType::F32).unwrap();
    let frames = (0..4)
        .map(|i| {
            let mut pose = PoseVector::zeros(s.skeleton.joint_count());
            for (k, v) in pose.0.iter_mut().enumerate() {
                *v = 0.3 * ((k + 3 * i) as f64 * 0.9).sin();
            }
            let camera = CameraPose::new(90.0 * i as f64, 5.0, 3.3, 40, 30);
            Observation { image: teacher.render(&pose, &camera).unwrap(), pose, camera }
        })
        .collect();
    let student = AvatarModel::new(s.skeleton, s.mesh, small_avatar(), 1, DType::F32).unwrap();
    (student, frames)
}

fn cfg(steps: usize) -> TrainConfig {
    TrainConfig { steps, learning_rate: 1e-2, ..TrainConfig::default() }
}

#[test]
fn two_hundred_steps_halve_the_loss() {
    let (m, frames) = clip();
    let trace = train_baseline(&m, &frames, &cfg(200), 5).unwrap();
    let head: f64 = trace[..4].iter().sum::<f64>() / 4.0;
    let tail: f64 = trace[196..].iter().sum::<f64>() / 4.0;
    assert!(tail < 0.5 * head, "initial {head}, final {tail}");
}

#[test]
fn same_seed_gives_same_trace() {
    let (a, frames) = clip();
    let (b, _) = clip();
    let ta = train_baseline(&a, &frames, &cfg(15), 7).unwrap();
    let tb = train_baseline(&b, &frames, &cfg(15), 7).unwrap();
    assert!((ta.last().unwrap() - tb.last().unwrap()).abs() < 1e-6);
    assert_eq!(a.fingerprint().unwrap(), b.fingerprint().unwrap());
}

#[test]
fn zero_steps_keep_initialization() {
    let (m, frames) = clip();
    let before = m.fingerprint().unwrap();
    assert!(train_baseline(&m, &frames, &cfg(0), 1).unwrap().is_empty());
    assert_eq!(before, m.fingerprint().unwrap());
}
