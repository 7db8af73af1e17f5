use crate::camera::CameraPose;
use crate::error::Result;
use crate::math::{self, Mat3};

use super::{sigmoid, GaussianCloud};

/// Added to the diagonal of every projected covariance, in px².
pub const COVARIANCE_DILATION: f64 = 0.3;

/// A Gaussian after projection to the image plane.
#[derive(Debug, Clone, PartialEq)]
pub struct Splat2D {
    /// Index of the source Gaussian in the cloud.
    pub index: usize,
    /// Screen position in pixels.
    pub mean: [f64; 2],
    /// Screen covariance `[a, b, c]` of `[[a, b], [b, c]]`, px².
    pub cov: [f64; 3],
    /// Inverse covariance in the same layout.
    pub conic: [f64; 3],
    /// Half-extent of the square support (3σ along the major axis).
    pub radius: f64,
    /// Camera-space depth.
    pub depth: f64,
    pub color: [f64; 3],
    pub opacity: f64,
}

#[derive(Debug, Clone)]
pub struct Projection {
    /// Visible splats, sorted by depth then source index.
    pub splats: Vec<Splat2D>,
    /// Gaussians dropped for lying in front of the near plane.
    pub culled: usize,
}

/// World covariance `R(q) · diag(s²) · R(q)ᵀ` and the factor `M = R·S`.
pub(crate) fn covariance3d(log_scale: [f64; 3], q: [f64; 4]) -> (Mat3, Mat3, Mat3, [f64; 3]) {
    let rot = math::quat_to_mat3(math::quat_normalize(q));
    let s = log_scale.map(f64::exp);
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = rot[i][j] * s[j];
        }
    }
    let cov = math::mat3_mul(&m, &math::transpose3(&m));
    (cov, m, rot, s)
}

/// Projection Jacobian of `(f x/z, f y/z)` at camera-space point `t`.
pub(crate) fn projection_jacobian(t: [f64; 3], f: f64) -> [[f64; 3]; 2] {
    let iz = 1.0 / t[2];
    [
        [f * iz, 0.0, -f * t[0] * iz * iz],
        [0.0, f * iz, -f * t[1] * iz * iz],
    ]
}

/// `T Σ Tᵀ` for a 2×3 `T` and symmetric 3×3 `Σ`.
pub(crate) fn sandwich(t: &[[f64; 3]; 2], sigma: &Mat3) -> [f64; 3] {
    let mut ts = [[0.0; 3]; 2];
    for i in 0..2 {
        for j in 0..3 {
            ts[i][j] = (0..3).map(|k| t[i][k] * sigma[k][j]).sum();
        }
    }
    let e = |i: usize, j: usize| (0..3).map(|k| ts[i][k] * t[j][k]).sum::<f64>();
    [e(0, 0), e(0, 1), e(1, 1)]
}

pub(crate) fn camera_jacobian(camera: &CameraPose, t: [f64; 3]) -> [[f64; 3]; 2] {
    let j = projection_jacobian(t, camera.focal());
    let w = camera.rotation();
    let mut out = [[0.0; 3]; 2];
    for i in 0..2 {
        for k in 0..3 {
            out[i][k] = (0..3).map(|m| j[i][m] * w[m][k]).sum();
        }
    }
    out
}

/// Projects every Gaussian in front of the near plane.
pub fn project_gaussians(cloud: &GaussianCloud, camera: &CameraPose) -> Result<Projection> {
    camera.validate()?;
    let f = camera.focal();
    let (cx, cy) = camera.principal_point();
    let mut splats = Vec::with_capacity(cloud.len());
    let mut culled = 0;
    for i in 0..cloud.len() {
        let t = camera.world_to_camera(cloud.centers[i]);
        if t[2] < camera.near {
            culled += 1;
            continue;
        }
        let (cov3, _, _, _) = covariance3d(cloud.log_scales[i], cloud.rotations[i]);
        let tw = camera_jacobian(camera, t);
        let mut cov = sandwich(&tw, &cov3);
        cov[0] += COVARIANCE_DILATION;
        cov[2] += COVARIANCE_DILATION;
        let det = cov[0] * cov[2] - cov[1] * cov[1];
        let conic = [cov[2] / det, -cov[1] / det, cov[0] / det];
        let mid = 0.5 * (cov[0] + cov[2]);
        let lambda_max = mid + (0.25 * (cov[0] - cov[2]).powi(2) + cov[1] * cov[1]).sqrt();
        splats.push(Splat2D {
            index: i,
            mean: [f * t[0] / t[2] + cx, f * t[1] / t[2] + cy],
            cov,
            conic,
            radius: 3.0 * lambda_max.sqrt(),
            depth: t[2],
            color: cloud.colors[i],
            opacity: sigmoid(cloud.opacity_logits[i]),
        });
    }
    splats.sort_by(|a, b| a.depth.total_cmp(&b.depth).then(a.index.cmp(&b.index)));
    Ok(Projection { splats, culled })
}
