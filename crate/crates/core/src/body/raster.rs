//! Z-buffered triangle rasterizer producing a visibility buffer, and the
//! camera-space normal map built on top of it.

use crate::camera::CameraPose;
use crate::error::Result;
use crate::image::{Image, Mask};
use crate::math::{self, Vec3};

pub const NO_FACE: u32 = u32::MAX;

/// Per pixel: nearest face, its perspective-correct barycentrics and depth.
#[derive(Debug, Clone)]
pub struct VisibilityBuffer {
    pub height: usize,
    pub width: usize,
    pub face: Vec<u32>,
    pub bary: Vec<[f64; 3]>,
    pub depth: Vec<f64>,
}

impl VisibilityBuffer {
    pub fn mask(&self) -> Mask {
        Mask {
            height: self.height,
            width: self.width,
            data: self.face.iter().map(|&f| f != NO_FACE).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RasterStats {
    /// Zero-area faces, skipped.
    pub degenerate_faces: usize,
    /// Faces with a vertex outside the clip range, skipped.
    pub clipped_faces: usize,
}

/// Rasterizes `faces` over world-space `vertices`. Both windings are drawn;
/// the nearest face wins and equal depths keep the lower face index.
pub fn rasterize(
    vertices: &[Vec3],
    faces: &[[u32; 3]],
    camera: &CameraPose,
) -> Result<(VisibilityBuffer, RasterStats)> {
    camera.validate()?;
    let (h, w) = (camera.height, camera.width);
    let mut buf = VisibilityBuffer {
        height: h,
        width: w,
        face: vec![NO_FACE; h * w],
        bary: vec![[0.0; 3]; h * w],
        depth: vec![f64::INFINITY; h * w],
    };
    let mut stats = RasterStats::default();
    let cam_pts: Vec<Vec3> = vertices.iter().map(|&p| camera.world_to_camera(p)).collect();
    for (fi, f) in faces.iter().enumerate() {
        let p = f.map(|i| cam_pts[i as usize]);
        let world_n = math::cross(math::sub(p[1], p[0]), math::sub(p[2], p[0]));
        if math::norm(world_n) < 1e-14 {
            stats.degenerate_faces += 1;
            continue;
        }
        if p.iter().any(|q| q[2] < camera.near || q[2] > camera.far) {
            stats.clipped_faces += 1;
            continue;
        }
        let s = p.map(|q| camera.project_camera_point(q));
        let area = (s[1].0 - s[0].0) * (s[2].1 - s[0].1) - (s[2].0 - s[0].0) * (s[1].1 - s[0].1);
        if area.abs() < 1e-12 {
            stats.degenerate_faces += 1;
            continue;
        }
        let min_x = s.iter().map(|q| q.0).fold(f64::INFINITY, f64::min);
        let max_x = s.iter().map(|q| q.0).fold(f64::NEG_INFINITY, f64::max);
        let min_y = s.iter().map(|q| q.1).fold(f64::INFINITY, f64::min);
        let max_y = s.iter().map(|q| q.1).fold(f64::NEG_INFINITY, f64::max);
        let x0 = (min_x - 0.5).ceil().max(0.0) as usize;
        let y0 = (min_y - 0.5).ceil().max(0.0) as usize;
        let x1 = ((max_x - 0.5).floor() as i64).min(w as i64 - 1);
        let y1 = ((max_y - 0.5).floor() as i64).min(h as i64 - 1);
        if x1 < x0 as i64 || y1 < y0 as i64 {
            continue;
        }
        for py in y0..=y1 as usize {
            let cy = py as f64 + 0.5;
            for px in x0..=x1 as usize {
                let cx = px as f64 + 0.5;
                let e0 = (s[2].0 - s[1].0) * (cy - s[1].1) - (s[2].1 - s[1].1) * (cx - s[1].0);
                let e1 = (s[0].0 - s[2].0) * (cy - s[2].1) - (s[0].1 - s[2].1) * (cx - s[2].0);
                let e2 = (s[1].0 - s[0].0) * (cy - s[0].1) - (s[1].1 - s[0].1) * (cx - s[0].0);
                let (b0, b1, b2) = (e0 / area, e1 / area, e2 / area);
                if b0 < 0.0 || b1 < 0.0 || b2 < 0.0 {
                    continue;
                }
                let inv_z = b0 / s[0].2 + b1 / s[1].2 + b2 / s[2].2;
                let z = 1.0 / inv_z;
                let idx = py * w + px;
                if z < buf.depth[idx] {
                    buf.depth[idx] = z;
                    buf.face[idx] = fi as u32;
                    buf.bary[idx] = [b0 / s[0].2 * z, b1 / s[1].2 * z, b2 / s[2].2 * z];
                }
            }
        }
    }
    Ok((buf, stats))
}

/// Encoded camera-space normal image plus the coverage it was built from.
#[derive(Debug, Clone)]
pub struct NormalMap {
    pub image: Image,
    pub mask: Mask,
    pub stats: RasterStats,
}

/// Face normals in camera space (x right, y up, z toward the viewer),
/// encoded as `(n + 1) / 2`; background is the encoded zero vector (0.5 gray).
pub fn render_normal_map(
    vertices: &[Vec3],
    faces: &[[u32; 3]],
    camera: &CameraPose,
) -> Result<NormalMap> {
    let (vis, stats) = rasterize(vertices, faces, camera)?;
    if stats.degenerate_faces > 0 {
        log::warn!("normal map: skipped {} degenerate faces", stats.degenerate_faces);
    }
    let rot = camera.rotation();
    let face_normals: Vec<[f32; 3]> = faces
        .iter()
        .map(|f| {
            let p = f.map(|i| vertices[i as usize]);
            let n = math::normalize(math::cross(math::sub(p[1], p[0]), math::sub(p[2], p[0])));
            let c = math::mat3_vec(&rot, n);
            [
                ((c[0] + 1.0) * 0.5) as f32,
                ((-c[1] + 1.0) * 0.5) as f32,
                ((-c[2] + 1.0) * 0.5) as f32,
            ]
        })
        .collect();
    let mut image = Image::filled(vis.height, vis.width, [0.5; 3]);
    for (i, &f) in vis.face.iter().enumerate() {
        if f != NO_FACE {
            let (y, x) = (i / vis.width, i % vis.width);
            image.set_pixel(y, x, face_normals[f as usize]);
        }
    }
    Ok(NormalMap {
        image,
        mask: vis.mask(),
        stats,
    })
}
