//! Differentiable 3D Gaussian splatting.
//!
//! Gaussians are projected with the first-order (EWA) approximation, sorted
//! globally by camera depth (ties by index) and alpha-composited front to
//! back per pixel. Gradients for every stored parameter are computed
//! analytically in [`render_backward`]; [`RenderOp`] exposes the renderer to
//! candle's autograd.

mod backward;
mod composite;
mod op;
mod project;

pub use backward::{render_backward, CloudGradient};
pub use composite::{composite, composite_detailed, Composite, ALPHA_SKIP};
pub use op::{render_tensor, RenderOp};
pub use project::{project_gaussians, Projection, Splat2D, COVARIANCE_DILATION};

use serde::{Deserialize, Serialize};

use crate::camera::CameraPose;
use crate::error::{Error, Result};
use crate::image::{Image, Mask};
use crate::math::{Quat, Vec3};

/// Number of scalars per Gaussian in the packed layout
/// `[x(3), log_scale(3), quat(4), opacity_logit(1), rgb(3)]`.
pub const PARAMS_PER_GAUSSIAN: usize = 14;

/// Collection of 3D Gaussians. Scales are stored as logarithms and opacity
/// as a logit; both are activated on use.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GaussianCloud {
    pub centers: Vec<Vec3>,
    pub log_scales: Vec<Vec3>,
    pub rotations: Vec<Quat>,
    pub opacity_logits: Vec<f64>,
    pub colors: Vec<[f64; 3]>,
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl GaussianCloud {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn push(&mut self, center: Vec3, log_scale: Vec3, rotation: Quat, opacity_logit: f64, color: [f64; 3]) {
        self.centers.push(center);
        self.log_scales.push(log_scale);
        self.rotations.push(rotation);
        self.opacity_logits.push(opacity_logit);
        self.colors.push(color);
    }

    pub fn opacity(&self, i: usize) -> f64 {
        sigmoid(self.opacity_logits[i])
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.centers.len();
        if self.log_scales.len() != n
            || self.rotations.len() != n
            || self.opacity_logits.len() != n
            || self.colors.len() != n
        {
            return Err(Error::validation("gaussian cloud field lengths disagree"));
        }
        for i in 0..n {
            let finite = self.centers[i].iter().all(|v| v.is_finite())
                && self.log_scales[i].iter().all(|v| v.is_finite())
                && self.rotations[i].iter().all(|v| v.is_finite())
                && self.opacity_logits[i].is_finite()
                && self.colors[i].iter().all(|v| v.is_finite());
            if !finite {
                return Err(Error::validation(format!("gaussian {i} has non-finite parameters")));
            }
            let qn: f64 = self.rotations[i].iter().map(|v| v * v).sum();
            if qn < 1e-24 {
                return Err(Error::validation(format!("gaussian {i} has a zero quaternion")));
            }
        }
        Ok(())
    }

    /// Packed row-major `N × 14` layout.
    pub fn to_packed(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len() * PARAMS_PER_GAUSSIAN);
        for i in 0..self.len() {
            out.extend_from_slice(&self.centers[i]);
            out.extend_from_slice(&self.log_scales[i]);
            out.extend_from_slice(&self.rotations[i]);
            out.push(self.opacity_logits[i]);
            out.extend_from_slice(&self.colors[i]);
        }
        out
    }

    pub fn from_packed(data: &[f64]) -> Result<Self> {
        if data.len() % PARAMS_PER_GAUSSIAN != 0 {
            return Err(Error::param(format!(
                "packed cloud length {} is not a multiple of {PARAMS_PER_GAUSSIAN}",
                data.len()
            )));
        }
        let mut cloud = GaussianCloud::default();
        for row in data.chunks_exact(PARAMS_PER_GAUSSIAN) {
            cloud.push(
                [row[0], row[1], row[2]],
                [row[3], row[4], row[5]],
                [row[6], row[7], row[8], row[9]],
                row[10],
                [row[11], row[12], row[13]],
            );
        }
        Ok(cloud)
    }

    /// Applies an index permutation: output `i` is input `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut out = GaussianCloud::default();
        for &p in perm {
            out.push(
                self.centers[p],
                self.log_scales[p],
                self.rotations[p],
                self.opacity_logits[p],
                self.colors[p],
            );
        }
        out
    }
}

/// Rendered frame with its accumulated opacity.
#[derive(Debug, Clone)]
pub struct RenderResult {
    /// Row-major interleaved RGB, double precision.
    pub color: Vec<f64>,
    /// Per-pixel accumulated opacity `1 - T_final`.
    pub alpha: Vec<f64>,
    pub height: usize,
    pub width: usize,
    pub culled: usize,
}

impl RenderResult {
    pub fn image(&self) -> Image {
        Image {
            height: self.height,
            width: self.width,
            data: self.color.iter().map(|&v| v as f32).collect(),
        }
    }

    /// Pixels whose accumulated opacity exceeds one half.
    pub fn coverage(&self) -> Mask {
        Mask {
            height: self.height,
            width: self.width,
            data: self.alpha.iter().map(|&a| a > 0.5).collect(),
        }
    }
}

/// Renders `cloud` from `camera` over a constant background.
pub fn render(cloud: &GaussianCloud, camera: &CameraPose, background: [f64; 3]) -> Result<Image> {
    Ok(render_detailed(cloud, camera, background)?.image())
}

pub fn render_detailed(
    cloud: &GaussianCloud,
    camera: &CameraPose,
    background: [f64; 3],
) -> Result<RenderResult> {
    cloud.validate()?;
    let projection = project_gaussians(cloud, camera)?;
    let comp = composite_detailed(&projection.splats, camera.height, camera.width, background);
    Ok(RenderResult {
        color: comp.color,
        alpha: comp.alpha,
        height: camera.height,
        width: camera.width,
        culled: projection.culled,
    })
}
