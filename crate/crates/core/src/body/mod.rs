//! Articulated body: skeleton, skinned mesh, forward kinematics and linear
//! blend skinning.
//!
//! Joint rotations use intrinsic XYZ Euler angles. A normalized pose entry in
//! `[-1, 1]` is multiplied by the joint's per-axis limit to give the angle.

mod humanoid;
mod raster;

pub use humanoid::{build_humanoid, BodyPart, HumanoidSpec, Subject, Texture};
pub use raster::{rasterize, NO_FACE, render_normal_map, NormalMap, RasterStats, VisibilityBuffer};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{self, Mat4, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skeleton {
    /// Parent index per joint, `-1` for the root. Parents precede children.
    pub parents: Vec<i32>,
    /// Parent-relative rest offsets in meters.
    pub rest_offsets: Vec<Vec3>,
    /// Per-axis rotation limit in radians.
    pub rotation_axis_limits: Vec<Vec3>,
}

impl Skeleton {
    pub fn joint_count(&self) -> usize {
        self.parents.len()
    }

    pub fn pose_len(&self) -> usize {
        3 * self.joint_count()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.parents.len();
        if n == 0 {
            return Err(Error::validation("skeleton has no joints"));
        }
        if self.rest_offsets.len() != n || self.rotation_axis_limits.len() != n {
            return Err(Error::validation("skeleton field lengths disagree"));
        }
        if self.parents[0] != -1 {
            return Err(Error::validation("joint 0 must be the root"));
        }
        for (j, &p) in self.parents.iter().enumerate().skip(1) {
            if p < 0 || p as usize >= j {
                return Err(Error::validation(format!(
                    "joint {j} has parent {p}; parents must precede children"
                )));
            }
        }
        if self
            .rest_offsets
            .iter()
            .flatten()
            .any(|v| !v.is_finite())
        {
            return Err(Error::validation("rest offsets must be finite"));
        }
        if self
            .rotation_axis_limits
            .iter()
            .flatten()
            .any(|&v| !(v > 0.0 && v.is_finite()))
        {
            return Err(Error::validation("rotation limits must be positive"));
        }
        Ok(())
    }

    /// Rest (bind) transforms: offsets composed root to leaf, no rotation.
    pub fn rest_transforms(&self) -> JointTransforms {
        let mut world: Vec<Mat4> = Vec::with_capacity(self.joint_count());
        for (j, &off) in self.rest_offsets.iter().enumerate() {
            let local = math::mat4_from_parts(&math::IDENTITY3, off);
            let w = match self.parents[j] {
                p if p < 0 => local,
                p => math::mat4_mul(&world[p as usize], &local),
            };
            world.push(w);
        }
        JointTransforms(world)
    }

    /// World-space joint origins in the rest pose.
    pub fn rest_positions(&self) -> Vec<Vec3> {
        self.rest_transforms()
            .0
            .iter()
            .map(math::mat4_trans)
            .collect()
    }
}

/// Normalized articulation parameters, three per joint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseVector(pub Vec<f64>);

impl PoseVector {
    pub fn zeros(joint_count: usize) -> Self {
        Self(vec![0.0; 3 * joint_count])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn validate_for(&self, skeleton: &Skeleton) -> Result<()> {
        if self.0.len() != skeleton.pose_len() {
            return Err(Error::param(format!(
                "pose has {} entries, skeleton expects {}",
                self.0.len(),
                skeleton.pose_len()
            )));
        }
        if let Some((i, v)) = self
            .0
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && (-1.0..=1.0).contains(*v)))
        {
            return Err(Error::Domain(format!(
                "pose entry {i} = {v} outside [-1, 1]"
            )));
        }
        Ok(())
    }

    pub fn clamped(&self) -> Self {
        Self(self.0.iter().map(|v| v.clamp(-1.0, 1.0)).collect())
    }
}

/// World transform of every joint.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTransforms(pub Vec<Mat4>);

/// Composes per-joint rotations root to leaf.
pub fn forward_kinematics(skeleton: &Skeleton, pose: &PoseVector) -> Result<JointTransforms> {
    pose.validate_for(skeleton)?;
    let mut world: Vec<Mat4> = Vec::with_capacity(skeleton.joint_count());
    for j in 0..skeleton.joint_count() {
        let lim = skeleton.rotation_axis_limits[j];
        let angles = [
            pose.0[3 * j] * lim[0],
            pose.0[3 * j + 1] * lim[1],
            pose.0[3 * j + 2] * lim[2],
        ];
        let local = math::mat4_from_parts(&math::euler_xyz(angles), skeleton.rest_offsets[j]);
        let w = match skeleton.parents[j] {
            p if p < 0 => local,
            p => math::mat4_mul(&world[p as usize], &local),
        };
        world.push(w);
    }
    Ok(JointTransforms(world))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodyMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[u32; 3]>,
    /// Row-major `V × J` skinning weights.
    pub skin_weights: Vec<f64>,
    pub joint_count: usize,
    pub vertex_colors: Vec<[f32; 3]>,
}

impl BodyMesh {
    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn weights(&self, v: usize) -> &[f64] {
        &self.skin_weights[v * self.joint_count..(v + 1) * self.joint_count]
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        if self.skin_weights.len() != n * self.joint_count {
            return Err(Error::validation("skin weight table has the wrong size"));
        }
        if self.vertex_colors.len() != n {
            return Err(Error::validation("vertex color count mismatch"));
        }
        for v in 0..n {
            let row = self.weights(v);
            if row.iter().any(|&w| w < 0.0 || !w.is_finite()) {
                return Err(Error::validation(format!("vertex {v} has a negative weight")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-6 {
                return Err(Error::validation(format!(
                    "skin weights of vertex {v} sum to {s}"
                )));
            }
        }
        if let Some(f) = self.faces.iter().find(|f| f.iter().any(|&i| i as usize >= n)) {
            return Err(Error::validation(format!("face {f:?} indexes past {n} vertices")));
        }
        Ok(())
    }
}

/// Per-vertex blended skinning transform `Σ_j w_vj · posed_j · rest_j⁻¹`
/// (a general affine map, not necessarily rigid).
pub fn blend_transforms(
    mesh: &BodyMesh,
    rest: &JointTransforms,
    posed: &JointTransforms,
) -> Result<Vec<Mat4>> {
    if rest.0.len() != mesh.joint_count || posed.0.len() != mesh.joint_count {
        return Err(Error::param("joint transform count does not match the mesh"));
    }
    let skinning: Vec<Mat4> = rest
        .0
        .iter()
        .zip(&posed.0)
        .map(|(r, p)| math::mat4_mul(p, &math::rigid_inverse(r)))
        .collect();
    let mut out = Vec::with_capacity(mesh.vertex_count());
    for v in 0..mesh.vertex_count() {
        let row = mesh.weights(v);
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > 1e-6 || row.iter().any(|&w| w < 0.0) {
            return Err(Error::validation(format!(
                "skin weights of vertex {v} are not normalized (sum {s})"
            )));
        }
        let mut m = [[0.0; 4]; 4];
        for (j, &w) in row.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for a in 0..4 {
                for b in 0..4 {
                    m[a][b] += w * skinning[j][a][b];
                }
            }
        }
        out.push(m);
    }
    Ok(out)
}

/// Posed vertex positions under linear blend skinning.
pub fn lbs_deform(
    mesh: &BodyMesh,
    rest: &JointTransforms,
    posed: &JointTransforms,
) -> Result<Vec<Vec3>> {
    let blended = blend_transforms(mesh, rest, posed)?;
    Ok(mesh
        .vertices
        .iter()
        .zip(&blended)
        .map(|(&v, m)| math::mat4_point(m, v))
        .collect())
}

/// Convenience: FK from the zero pose and `pose`, then LBS.
pub fn pose_mesh(skeleton: &Skeleton, mesh: &BodyMesh, pose: &PoseVector) -> Result<Vec<Vec3>> {
    let rest = skeleton.rest_transforms();
    let posed = forward_kinematics(skeleton, pose)?;
    lbs_deform(mesh, &rest, &posed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{det3, mat4_rot, mat4_trans};
    use std::f64::consts::FRAC_PI_2;

    fn chain() -> Skeleton {
        Skeleton {
            parents: vec![-1, 0],
            rest_offsets: vec![[0.0; 3], [1.0, 0.0, 0.0]],
            rotation_axis_limits: vec![[FRAC_PI_2; 3]; 2],
        }
    }

    #[test]
    fn zero_pose_is_rest() {
        let sk = chain();
        let fk = forward_kinematics(&sk, &PoseVector::zeros(2)).unwrap();
        assert_eq!(fk, sk.rest_transforms());
    }

    #[test]
    fn root_z_rotation_moves_child() {
        let sk = chain();
        // Root z = +1 × 90° limit.
        let pose = PoseVector(vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        let fk = forward_kinematics(&sk, &pose).unwrap();
        let child = mat4_trans(&fk.0[1]);
        assert!((child[0] - 0.0).abs() < 1e-12);
        assert!((child[1] - 1.0).abs() < 1e-12);
        assert!(child[2].abs() < 1e-12);
        for t in &fk.0 {
            assert!((det3(&mat4_rot(t)) - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn pose_errors() {
        let sk = chain();
        assert!(matches!(
            forward_kinematics(&sk, &PoseVector(vec![0.0; 5])),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            forward_kinematics(&sk, &PoseVector(vec![0.0, 0.0, 1.5, 0.0, 0.0, 0.0])),
            Err(Error::Domain(_))
        ));
    }

    fn two_vertex_mesh(weights: Vec<f64>) -> BodyMesh {
        BodyMesh {
            vertices: vec![[2.0, 0.0, 0.0], [1.0, 1.0, 0.5]],
            faces: vec![],
            skin_weights: weights,
            joint_count: 2,
            vertex_colors: vec![[0.5; 3]; 2],
        }
    }

    #[test]
    fn rigid_binding_follows_joint() {
        let sk = chain();
        let mesh = two_vertex_mesh(vec![0.0, 1.0, 0.0, 1.0]);
        let pose = PoseVector(vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let rest = sk.rest_transforms();
        let posed = forward_kinematics(&sk, &pose).unwrap();
        let out = lbs_deform(&mesh, &rest, &posed).unwrap();
        // Child joint at (1,0,0) rotated 90° about z: (2,0,0) -> (1,1,0).
        assert!((out[0][0] - 1.0).abs() < 1e-12 && (out[0][1] - 1.0).abs() < 1e-12);
        // (1,1,0.5) is at child-local (0,1,0.5) -> (-1,0,0.5) -> world (0,0,0.5).
        assert!(out[1][0].abs() < 1e-12 && out[1][1].abs() < 1e-12);
        assert!((out[1][2] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn half_weights_average_the_rigid_results() {
        let sk = chain();
        let pose = PoseVector(vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let rest = sk.rest_transforms();
        let posed = forward_kinematics(&sk, &pose).unwrap();
        let a = lbs_deform(&two_vertex_mesh(vec![1.0, 0.0, 1.0, 0.0]), &rest, &posed).unwrap();
        let b = lbs_deform(&two_vertex_mesh(vec![0.0, 1.0, 0.0, 1.0]), &rest, &posed).unwrap();
        let mix = lbs_deform(&two_vertex_mesh(vec![0.5, 0.5, 0.5, 0.5]), &rest, &posed).unwrap();
        for v in 0..2 {
            for k in 0..3 {
                assert!((mix[v][k] - 0.5 * (a[v][k] + b[v][k])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unnormalized_weights_rejected() {
        let sk = chain();
        let rest = sk.rest_transforms();
        let mesh = two_vertex_mesh(vec![0.7, 0.7, 0.0, 1.0]);
        assert!(matches!(
            lbs_deform(&mesh, &rest, &rest),
            Err(Error::Validation(_))
        ));
    }
}
