//! Unseen-view synthesis: Gaussian perturbations of pose and camera fed
//! through the frozen baseline avatar.

use rand_distr::{Distribution, StandardNormal};

use crate::avatar::AvatarModel;
use crate::body::PoseVector;
use crate::camera::{wrap_degrees, CameraPose};
use crate::config::PerturbationConfig;
use crate::error::Result;
use crate::image::{Image, Mask};
use crate::rng::Rng;

/// Elevation stays inside this range (degrees) after perturbation.
pub const ELEVATION_LIMIT: f64 = 89.0;

/// Adds `N(0, pose_variance)` to every entry, then clamps to `[-1, 1]`.
pub fn sample_pose_perturbation(pose: &PoseVector, cfg: &PerturbationConfig, rng: &mut Rng) -> PoseVector {
    let std = cfg.pose_variance.sqrt();
    PoseVector(
        pose.0
            .iter()
            .map(|&v| {
                let z: f64 = StandardNormal.sample(rng);
                (v + std * z).clamp(-1.0, 1.0)
            })
            .collect(),
    )
}

/// Adds `N(0, camera_variance)` degrees to azimuth and elevation. Azimuth is
/// wrapped into `[0, 360)`; elevation is clamped to ±89°.
pub fn sample_camera_perturbation(camera: &CameraPose, cfg: &PerturbationConfig, rng: &mut Rng) -> CameraPose {
    let std = cfg.camera_variance.sqrt();
    let za: f64 = StandardNormal.sample(rng);
    let ze: f64 = StandardNormal.sample(rng);
    CameraPose {
        azimuth: wrap_degrees(camera.azimuth + std * za),
        elevation: (camera.elevation + std * ze).clamp(-ELEVATION_LIMIT, ELEVATION_LIMIT),
        ..*camera
    }
}

/// A real frame the generator starts from.
#[derive(Debug, Clone)]
pub struct SourceFrame {
    pub index: usize,
    pub pose: PoseVector,
    pub camera: CameraPose,
}

/// Baseline render at a perturbed pose and view.
#[derive(Debug, Clone)]
pub struct CoarseSample {
    pub image: Image,
    /// Pixels with accumulated opacity above one half.
    pub mask: Mask,
    pub pose: PoseVector,
    pub camera: CameraPose,
    pub source_index: usize,
}

/// Draws `count` independent perturbations of `source` and renders each with
/// the (read-only) model.
pub fn generate_coarse(
    model: &AvatarModel,
    source: &SourceFrame,
    cfg: &PerturbationConfig,
    rng: &mut Rng,
    count: usize,
) -> Result<Vec<CoarseSample>> {
    source.pose.validate_for(&model.skeleton)?;
    source.camera.validate()?;
    (0..count)
        .map(|_| {
            let pose = sample_pose_perturbation(&source.pose, cfg, rng);
            let camera = sample_camera_perturbation(&source.camera, cfg, rng);
            let r = model.render_detailed(&pose, &camera)?;
            Ok(CoarseSample {
                image: r.image(),
                mask: r.coverage(),
                pose,
                camera,
                source_index: source.index,
            })
        })
        .collect()
}
