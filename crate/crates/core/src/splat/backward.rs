use crate::camera::CameraPose;
use crate::error::{Error, Result};
use crate::math::{Quat, Vec3};

use super::composite::composite_detailed;
use super::project::{camera_jacobian, covariance3d, project_gaussians};
use super::GaussianCloud;

/// Gradient of a scalar loss with respect to every stored cloud parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct CloudGradient {
    pub centers: Vec<Vec3>,
    pub log_scales: Vec<Vec3>,
    pub rotations: Vec<Quat>,
    pub opacity_logits: Vec<f64>,
    pub colors: Vec<[f64; 3]>,
}

impl CloudGradient {
    pub fn zeros(n: usize) -> Self {
        Self {
            centers: vec![[0.0; 3]; n],
            log_scales: vec![[0.0; 3]; n],
            rotations: vec![[0.0; 4]; n],
            opacity_logits: vec![0.0; n],
            colors: vec![[0.0; 3]; n],
        }
    }

    /// Packed `N × 14` layout matching [`GaussianCloud::to_packed`].
    pub fn to_packed(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.centers.len() * 14);
        for i in 0..self.centers.len() {
            out.extend_from_slice(&self.centers[i]);
            out.extend_from_slice(&self.log_scales[i]);
            out.extend_from_slice(&self.rotations[i]);
            out.push(self.opacity_logits[i]);
            out.extend_from_slice(&self.colors[i]);
        }
        out
    }
}

#[derive(Clone, Copy, Default)]
struct SplatGrad {
    mean: [f64; 2],
    conic: [f64; 3],
    opacity: f64,
    color: [f64; 3],
}

/// Backpropagates `d_color` (row-major interleaved RGB, one entry per output
/// value) through the renderer. Truncation gates (3σ support and the
/// minimum-alpha skip) are treated as constants.
pub fn render_backward(
    cloud: &GaussianCloud,
    camera: &CameraPose,
    background: [f64; 3],
    d_color: &[f64],
) -> Result<CloudGradient> {
    cloud.validate()?;
    let (h, w) = (camera.height, camera.width);
    if d_color.len() != h * w * 3 {
        return Err(Error::param(format!(
            "upstream gradient has {} values, expected {}",
            d_color.len(),
            h * w * 3
        )));
    }
    let projection = project_gaussians(cloud, camera)?;
    let splats = &projection.splats;
    let comp = composite_detailed(splats, h, w, background);

    let mut sg = vec![SplatGrad::default(); splats.len()];
    for p in 0..h * w {
        let entries = &comp.entries[comp.offsets[p]..comp.offsets[p + 1]];
        if entries.is_empty() {
            continue;
        }
        let g_pix = [d_color[p * 3], d_color[p * 3 + 1], d_color[p * 3 + 2]];
        if g_pix == [0.0; 3] {
            continue;
        }
        let (py, px) = ((p / w) as f64 + 0.5, (p % w) as f64 + 0.5);
        // Colour seen behind the current contribution, normalized by its transmittance.
        let mut behind = background;
        for e in entries.iter().rev() {
            let s = &splats[e.splat as usize];
            let acc = &mut sg[e.splat as usize];
            let mut d_alpha = 0.0;
            for ch in 0..3 {
                acc.color[ch] += g_pix[ch] * e.alpha * e.trans;
                d_alpha += g_pix[ch] * e.trans * (s.color[ch] - behind[ch]);
            }
            for ch in 0..3 {
                behind[ch] = s.color[ch] * e.alpha + (1.0 - e.alpha) * behind[ch];
            }
            acc.opacity += d_alpha * e.gauss;
            let d_power = d_alpha * s.opacity * e.gauss;
            let dx = px - s.mean[0];
            let dy = py - s.mean[1];
            let [ca, cb, cc] = s.conic;
            acc.mean[0] += d_power * (ca * dx + cb * dy);
            acc.mean[1] += d_power * (cb * dx + cc * dy);
            acc.conic[0] += d_power * (-0.5 * dx * dx);
            acc.conic[1] += d_power * (-dx * dy);
            acc.conic[2] += d_power * (-0.5 * dy * dy);
        }
    }

    let mut grad = CloudGradient::zeros(cloud.len());
    let f = camera.focal();
    let wrot = camera.rotation();
    for (s, g) in splats.iter().zip(&sg) {
        let i = s.index;
        grad.colors[i] = g.color;
        let o = s.opacity;
        grad.opacity_logits[i] = g.opacity * o * (1.0 - o);

        // Conic -> screen covariance.
        let [a, b, c] = s.cov;
        let det = a * c - b * b;
        let d2 = det * det;
        let [gca, gcb, gcc] = g.conic;
        let ga = gca * (-c * c / d2) + gcb * (b * c / d2) + gcc * (-b * b / d2);
        let gb = gca * (2.0 * b * c / d2) + gcb * (-(a * c + b * b) / d2) + gcc * (2.0 * a * b / d2);
        let gc = gca * (-b * b / d2) + gcb * (a * b / d2) + gcc * (-a * a / d2);
        let g2 = [[ga, 0.5 * gb], [0.5 * gb, gc]];

        let t = camera.world_to_camera(cloud.centers[i]);
        let (cov3, m, rot, scale) = covariance3d(cloud.log_scales[i], cloud.rotations[i]);
        let tj = camera_jacobian(camera, t);

        // dΣ3 = Tᵀ G T, dT = 2 G T Σ3.
        let mut d_cov3 = [[0.0; 3]; 3];
        for k in 0..3 {
            for l in 0..3 {
                d_cov3[k][l] = (0..2)
                    .map(|p| (0..2).map(|q| g2[p][q] * tj[p][k] * tj[q][l]).sum::<f64>())
                    .sum();
            }
        }
        let mut t_cov = [[0.0; 3]; 2];
        for p in 0..2 {
            for k in 0..3 {
                t_cov[p][k] = (0..3).map(|l| tj[p][l] * cov3[l][k]).sum();
            }
        }
        let mut d_t = [[0.0; 3]; 2];
        for p in 0..2 {
            for k in 0..3 {
                d_t[p][k] = 2.0 * (0..2).map(|q| g2[p][q] * t_cov[q][k]).sum::<f64>();
            }
        }
        // T = J W  ->  dJ = dT Wᵀ.
        let mut d_j = [[0.0; 3]; 2];
        for p in 0..2 {
            for mm in 0..3 {
                d_j[p][mm] = (0..3).map(|k| d_t[p][k] * wrot[mm][k]).sum();
            }
        }

        let (tx, ty, tz) = (t[0], t[1], t[2]);
        let iz = 1.0 / tz;
        let iz2 = iz * iz;
        let iz3 = iz2 * iz;
        let mut d_cam = [0.0; 3];
        d_cam[0] += g.mean[0] * f * iz;
        d_cam[1] += g.mean[1] * f * iz;
        d_cam[2] += g.mean[0] * (-f * tx * iz2) + g.mean[1] * (-f * ty * iz2);
        d_cam[0] += d_j[0][2] * (-f * iz2);
        d_cam[1] += d_j[1][2] * (-f * iz2);
        d_cam[2] += d_j[0][0] * (-f * iz2)
            + d_j[0][2] * (2.0 * f * tx * iz3)
            + d_j[1][1] * (-f * iz2)
            + d_j[1][2] * (2.0 * f * ty * iz3);
        for k in 0..3 {
            grad.centers[i][k] = (0..3).map(|r| wrot[r][k] * d_cam[r]).sum();
        }

        // Σ3 = M Mᵀ, M = R S.
        let mut d_m = [[0.0; 3]; 3];
        for p in 0..3 {
            for q in 0..3 {
                d_m[p][q] = 2.0 * (0..3).map(|l| d_cov3[p][l] * m[l][q]).sum::<f64>();
            }
        }
        let mut d_r = [[0.0; 3]; 3];
        for p in 0..3 {
            for q in 0..3 {
                d_r[p][q] = d_m[p][q] * scale[q];
            }
        }
        for q in 0..3 {
            let ds: f64 = (0..3).map(|p| d_m[p][q] * rot[p][q]).sum();
            grad.log_scales[i][q] = ds * scale[q];
        }
        grad.rotations[i] = quaternion_grad(cloud.rotations[i], &d_r);
    }
    Ok(grad)
}

/// Gradient through `R(q / |q|)` given `dL/dR`.
fn quaternion_grad(q: Quat, g: &[[f64; 3]; 3]) -> Quat {
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    let [w, x, y, z] = [q[0] / n, q[1] / n, q[2] / n, q[3] / n];
    let dw = 2.0 * (-z * g[0][1] + y * g[0][2] + z * g[1][0] - x * g[1][2] - y * g[2][0] + x * g[2][1]);
    let dx = 2.0
        * (y * g[0][1] + z * g[0][2] + y * g[1][0] - 2.0 * x * g[1][1] - w * g[1][2] + z * g[2][0]
            + w * g[2][1]
            - 2.0 * x * g[2][2]);
    let dy = 2.0
        * (-2.0 * y * g[0][0] + x * g[0][1] + w * g[0][2] + x * g[1][0] + z * g[1][2] - w * g[2][0]
            + z * g[2][1]
            - 2.0 * y * g[2][2]);
    let dz = 2.0
        * (-2.0 * z * g[0][0] - w * g[0][1] + x * g[0][2] + w * g[1][0] - 2.0 * z * g[1][1]
            + y * g[1][2]
            + x * g[2][0]
            + y * g[2][1]);
    let dn = [dw, dx, dy, dz];
    let qn = [w, x, y, z];
    let proj: f64 = (0..4).map(|k| dn[k] * qn[k]).sum();
    [
        (dn[0] - qn[0] * proj) / n,
        (dn[1] - qn[1] * proj) / n,
        (dn[2] - qn[2] * proj) / n,
        (dn[3] - qn[3] * proj) / n,
    ]
}
