//! Baseline avatar: a triplane feature field sampled at the canonical body
//! vertices, per-attribute MLP heads producing one Gaussian per vertex, and
//! LBS articulation into observation space.

use candle_core::{DType, Device, Tensor};
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use rand::Rng as _;

use crate::body::{blend_transforms, forward_kinematics, BodyMesh, JointTransforms, PoseVector, Skeleton};
use crate::camera::CameraPose;
use crate::checkpoint::{Checkpoint, CheckpointMeta};
use crate::config::{AvatarConfig, TrainConfig};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::math::{self, Vec3};
use crate::nn::{self, Init, LossWeights, Mlp, ParamStore, PerceptualProxy};
use crate::rng::{self, Rng};
use crate::splat::{self, GaussianCloud};

/// Frames are rendered over black, matching the ground-truth renderer.
pub const BACKGROUND: [f64; 3] = [0.0; 3];

/// Axis pairs of the XY, XZ and YZ planes.
const PLANES: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];

/// Bilinear lookup of a set of points into the flattened planes:
/// `index` has 12 entries per point (3 planes × 4 corners), `weight` matches.
#[derive(Debug, Clone)]
pub struct TriplaneLookup {
    pub index: Vec<u32>,
    pub weight: Vec<f64>,
}

/// Axis-aligned bounds of the feature field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldBounds {
    pub lo: Vec3,
    pub hi: Vec3,
}

impl FieldBounds {
    /// Bounding box of `points` grown by `margin` of its extent on every side.
    pub fn around(points: &[Vec3], margin: f64) -> Self {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in points {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        for k in 0..3 {
            let ext = (hi[k] - lo[k]).max(1e-3);
            lo[k] -= margin * ext;
            hi[k] += margin * ext;
        }
        Self { lo, hi }
    }

    pub fn lookup(&self, points: &[Vec3], grid: usize) -> TriplaneLookup {
        let mut index = Vec::with_capacity(points.len() * 12);
        let mut weight = Vec::with_capacity(points.len() * 12);
        let g = grid as f64 - 1.0;
        for p in points {
            for (pi, &(a, b)) in PLANES.iter().enumerate() {
                let coord = |k: usize| ((p[k] - self.lo[k]) / (self.hi[k] - self.lo[k])).clamp(0.0, 1.0) * g;
                let (ga, gb) = (coord(a), coord(b));
                let i0 = (ga.floor() as usize).min(grid - 2);
                let j0 = (gb.floor() as usize).min(grid - 2);
                let (fa, fb) = (ga - i0 as f64, gb - j0 as f64);
                let base = pi * grid * grid;
                let node = |i: usize, j: usize| (base + j * grid + i) as u32;
                index.extend_from_slice(&[node(i0, j0), node(i0 + 1, j0), node(i0, j0 + 1), node(i0 + 1, j0 + 1)]);
                weight.extend_from_slice(&[(1.0 - fa) * (1.0 - fb), fa * (1.0 - fb), (1.0 - fa) * fb, fa * fb]);
            }
        }
        TriplaneLookup { index, weight }
    }
}

#[derive(Debug, Clone)]
struct Heads {
    offset: Mlp,
    scale: Mlp,
    rotation: Mlp,
    opacity: Mlp,
    color: Mlp,
}

/// Per-pose constants for [`AvatarModel::posed_tensor`].
#[derive(Debug, Clone)]
pub struct PoseCache {
    /// `(V, 3, 3)` blended linear parts.
    linear: Tensor,
    /// `(V, 3)` blended translations.
    translation: Tensor,
    /// `(V, 4, 4)` left-multiplication matrices of the re-orthonormalized rotations.
    quat_left: Tensor,
}

/// Parameters live in shared `Var`s; use [`AvatarModel::duplicate`] for an
/// independent copy.
#[derive(Debug)]
pub struct AvatarModel {
    pub skeleton: Skeleton,
    pub mesh: BodyMesh,
    pub config: AvatarConfig,
    pub bounds: FieldBounds,
    ps: ParamStore,
    planes: Tensor,
    heads: Heads,
    lookup_index: Tensor,
    lookup_weight: Tensor,
    vertices: Tensor,
    base_log_scale: Tensor,
    quat_bias: Tensor,
    rest: JointTransforms,
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Mean length of the edges touching each vertex (isolated vertices get the global mean).
fn vertex_spacing(mesh: &BodyMesh) -> Vec<f64> {
    let n = mesh.vertex_count();
    let mut sum = vec![0.0; n];
    let mut cnt = vec![0usize; n];
    for f in &mesh.faces {
        for e in 0..3 {
            let (a, b) = (f[e] as usize, f[(e + 1) % 3] as usize);
            let d = math::norm(math::sub(mesh.vertices[a], mesh.vertices[b]));
            for v in [a, b] {
                sum[v] += d;
                cnt[v] += 1;
            }
        }
    }
    let total: f64 = sum.iter().sum();
    let count: usize = cnt.iter().sum();
    let global = if count > 0 { total / count as f64 } else { 0.02 };
    (0..n)
        .map(|v| if cnt[v] > 0 { sum[v] / cnt[v] as f64 } else { global })
        .collect()
}

impl AvatarModel {
    pub fn new(skeleton: Skeleton, mesh: BodyMesh, config: AvatarConfig, seed: u64, dtype: DType) -> Result<Self> {
        skeleton.validate()?;
        mesh.validate()?;
        if mesh.joint_count != skeleton.joint_count() {
            return Err(Error::validation("mesh and skeleton joint counts differ"));
        }
        let dev = Device::Cpu;
        let mut rng = rng::stream(seed, "avatar-init");
        let mut ps = ParamStore::new(dtype);
        let (g, d) = (config.grid, config.feature_dim);
        let planes = ps.param("triplane", &[3 * g * g, d], Init::Uniform(0.5), &mut rng)?;
        let fdim = 3 * d;
        let h = config.hidden;
        let heads = Heads {
            offset: Mlp::new(&mut ps, "head.offset", &[fdim, h, 3], 0.0, &mut rng)?,
            scale: Mlp::new(&mut ps, "head.scale", &[fdim, h, 3], 0.1, &mut rng)?,
            rotation: Mlp::new(&mut ps, "head.rotation", &[fdim, h, 4], 0.1, &mut rng)?,
            opacity: Mlp::new(&mut ps, "head.opacity", &[fdim, h, 1], 0.1, &mut rng)?,
            color: Mlp::new(&mut ps, "head.color", &[fdim, h, 3], 1.0, &mut rng)?,
        };
        let bounds = FieldBounds::around(&mesh.vertices, config.margin);
        let lk = bounds.lookup(&mesh.vertices, g);
        let n = mesh.vertex_count();
        let lookup_index = Tensor::from_vec(lk.index, n * 12, &dev)?;
        let lookup_weight = Tensor::from_vec(lk.weight, (n, 3, 4, 1), &dev)?.to_dtype(dtype)?;
        let flat: Vec<f64> = mesh.vertices.iter().flat_map(|v| v.iter().copied()).collect();
        let vertices = Tensor::from_vec(flat, (n, 3), &dev)?.to_dtype(dtype)?;
        let spacing = vertex_spacing(&mesh);
        let ls: Vec<f64> = spacing.iter().flat_map(|s| [(0.5 * s).ln(); 3]).collect();
        let base_log_scale = Tensor::from_vec(ls, (n, 3), &dev)?.to_dtype(dtype)?;
        let quat_bias = Tensor::from_vec(vec![1.0f64, 0.0, 0.0, 0.0], (1, 4), &dev)?.to_dtype(dtype)?;
        let rest = skeleton.rest_transforms();
        Ok(Self {
            skeleton,
            mesh,
            config,
            bounds,
            ps,
            planes,
            heads,
            lookup_index,
            lookup_weight,
            vertices,
            base_log_scale,
            quat_bias,
            rest,
        })
    }

    /// Independent copy with identical parameter values.
    pub fn duplicate(&self) -> Result<Self> {
        let mut m = Self::new(self.skeleton.clone(), self.mesh.clone(), self.config.clone(), 0, self.dtype())?;
        m.ps.copy_from(&self.ps)?;
        Ok(m)
    }

    pub fn params(&self) -> &ParamStore {
        &self.ps
    }

    pub fn dtype(&self) -> DType {
        self.ps.dtype()
    }

    pub fn gaussian_count(&self) -> usize {
        self.mesh.vertex_count()
    }

    /// The triplane as a `(3·G·G, d)` tensor (row = plane node).
    pub fn triplane(&self) -> &Tensor {
        &self.planes
    }

    /// Concatenated plane features `(V, 3d)` at the canonical vertices.
    pub fn vertex_features(&self) -> Result<Tensor> {
        let n = self.mesh.vertex_count();
        let d = self.config.feature_dim;
        let gathered = self.planes.index_select(&self.lookup_index, 0)?.reshape((n, 3, 4, d))?;
        let f = gathered.broadcast_mul(&self.lookup_weight)?.sum(2)?;
        Ok(f.reshape((n, 3 * d))?)
    }

    /// Features at arbitrary points, through the same bilinear rule.
    pub fn sample_features(&self, points: &[Vec3]) -> Result<Tensor> {
        let lk = self.bounds.lookup(points, self.config.grid);
        let n = points.len();
        let d = self.config.feature_dim;
        let idx = Tensor::from_vec(lk.index, n * 12, &Device::Cpu)?;
        let w = Tensor::from_vec(lk.weight, (n, 3, 4, 1), &Device::Cpu)?.to_dtype(self.dtype())?;
        let gathered = self.planes.index_select(&idx, 0)?.reshape((n, 3, 4, d))?;
        Ok(gathered.broadcast_mul(&w)?.sum(2)?.reshape((n, 3 * d))?)
    }

    /// Packed `(V, 14)` canonical cloud, differentiable w.r.t. all parameters.
    pub fn canonical_tensor(&self) -> Result<Tensor> {
        let f = self.vertex_features()?;
        let h = &self.heads;
        let centers = (&self.vertices + h.offset.forward(&f)?)?;
        let log_s = (&self.base_log_scale + h.scale.forward(&f)?)?;
        let q = h.rotation.forward(&f)?.broadcast_add(&self.quat_bias)?;
        let qn = q.sqr()?.sum_keepdim(1)?.sqrt()?;
        let q = q.broadcast_div(&qn)?;
        let op = (h.opacity.forward(&f)? + logit(self.config.init_opacity))?;
        let col = candle_nn::ops::sigmoid(&h.color.forward(&f)?)?;
        Ok(Tensor::cat(&[&centers, &log_s, &q, &op, &col], 1)?)
    }

    pub fn canonical_gaussians(&self) -> Result<GaussianCloud> {
        packed_to_cloud(&self.canonical_tensor()?)
    }

    /// Blended transforms for `pose`, ready for [`Self::posed_tensor`].
    pub fn pose_cache(&self, pose: &PoseVector) -> Result<PoseCache> {
        let posed = forward_kinematics(&self.skeleton, pose)?;
        let blended = blend_transforms(&self.mesh, &self.rest, &posed)?;
        let n = blended.len();
        let mut lin = Vec::with_capacity(n * 9);
        let mut tr = Vec::with_capacity(n * 3);
        let mut ql = Vec::with_capacity(n * 16);
        for m in &blended {
            let a = math::mat4_rot(m);
            lin.extend(a.iter().flat_map(|r| r.iter().copied()));
            tr.extend_from_slice(&math::mat4_trans(m));
            let q = math::mat3_to_quat(&math::nearest_rotation(&a));
            ql.extend(math::quat_left_matrix(q).iter().flat_map(|r| r.iter().copied()));
        }
        let dev = Device::Cpu;
        let dt = self.dtype();
        Ok(PoseCache {
            linear: Tensor::from_vec(lin, (n, 3, 3), &dev)?.to_dtype(dt)?,
            translation: Tensor::from_vec(tr, (n, 3), &dev)?.to_dtype(dt)?,
            quat_left: Tensor::from_vec(ql, (n, 4, 4), &dev)?.to_dtype(dt)?,
        })
    }

    /// Packed observation-space cloud: centers through the blended skinning
    /// transform, rotations composed with its nearest rotation.
    pub fn posed_tensor(&self, cache: &PoseCache) -> Result<Tensor> {
        let c = self.canonical_tensor()?;
        let centers = c.narrow(1, 0, 3)?.unsqueeze(2)?;
        let centers = (cache.linear.matmul(&centers)?.squeeze(2)? + &cache.translation)?;
        let q = c.narrow(1, 6, 4)?.unsqueeze(2)?;
        let q = cache.quat_left.matmul(&q)?.squeeze(2)?;
        Ok(Tensor::cat(&[&centers, &c.narrow(1, 3, 3)?, &q, &c.narrow(1, 10, 4)?], 1)?)
    }

    pub fn pose_gaussians(&self, pose: &PoseVector) -> Result<GaussianCloud> {
        packed_to_cloud(&self.posed_tensor(&self.pose_cache(pose)?)?)
    }

    /// Renders the avatar at `pose` from `camera`.
    pub fn render(&self, pose: &PoseVector, camera: &CameraPose) -> Result<Image> {
        splat::render(&self.pose_gaussians(pose)?, camera, BACKGROUND)
    }

    pub fn render_detailed(&self, pose: &PoseVector, camera: &CameraPose) -> Result<splat::RenderResult> {
        splat::render_detailed(&self.pose_gaussians(pose)?, camera, BACKGROUND)
    }

    /// Differentiable `(3, H, W)` render.
    pub fn render_tensor(&self, cache: &PoseCache, camera: &CameraPose) -> Result<Tensor> {
        splat::render_tensor(&self.posed_tensor(cache)?, camera, BACKGROUND)
    }

    pub fn fingerprint(&self) -> Result<String> {
        self.ps.fingerprint()
    }

    pub fn to_checkpoint(&self, config_hash: &str, seed: u64, extra: serde_json::Value) -> Result<Checkpoint> {
        Ok(Checkpoint {
            meta: CheckpointMeta {
                kind: "avatar".into(),
                config_hash: config_hash.into(),
                seed,
                extra,
            },
            arrays: self.ps.export()?,
        })
    }

    pub fn load_arrays(&mut self, ck: &Checkpoint) -> Result<()> {
        if ck.meta.kind != "avatar" {
            return Err(Error::Format(format!("expected an avatar checkpoint, got {}", ck.meta.kind)));
        }
        self.ps.import(&ck.arrays)
    }
}

/// Converts a packed `(N, 14)` tensor to a cloud.
pub fn packed_to_cloud(t: &Tensor) -> Result<GaussianCloud> {
    let v: Vec<f64> = t.to_dtype(DType::F64)?.flatten_all()?.to_vec1()?;
    GaussianCloud::from_packed(&v)
}

/// One supervised view: target image with its pose and camera.
#[derive(Debug, Clone)]
pub struct Observation {
    pub image: Image,
    pub pose: PoseVector,
    pub camera: CameraPose,
}

/// Optimizer state plus the loss machinery shared by baseline training and
/// augmented fine-tuning.
pub struct Trainer {
    opt: AdamW,
    proxy: PerceptualProxy,
    pub weights: LossWeights,
}

impl Trainer {
    pub fn new(model: &AvatarModel, learning_rate: f64, weights: LossWeights) -> Result<Self> {
        weights.validate()?;
        let params = ParamsAdamW {
            lr: learning_rate,
            weight_decay: 0.0,
            ..Default::default()
        };
        Ok(Self {
            opt: AdamW::new(model.params().vars(), params)?,
            proxy: PerceptualProxy::new(model.dtype())?,
            weights,
        })
    }

    /// Loss of the current model on one view, without updating.
    pub fn loss(&self, model: &AvatarModel, cache: &PoseCache, camera: &CameraPose, target: &Tensor) -> Result<Tensor> {
        let img = model.render_tensor(cache, camera)?;
        nn::reconstruction_loss(&img, target, self.weights, &self.proxy)
    }

    /// One optimizer step on the mean loss over `views`; returns that loss.
    pub fn step(&mut self, model: &AvatarModel, views: &[(&PoseCache, &CameraPose, &Tensor)], weights: Option<LossWeights>) -> Result<f64> {
        let w = weights.unwrap_or(self.weights);
        let mut total: Option<Tensor> = None;
        for (cache, camera, target) in views {
            let img = model.render_tensor(cache, camera)?;
            let l = nn::reconstruction_loss(&img, target, w, &self.proxy)?;
            total = Some(match total {
                None => l,
                Some(t) => (t + l)?,
            });
        }
        let loss = (total.ok_or_else(|| Error::param("empty training batch"))? / views.len() as f64)?;
        let v = nn::scalar(&loss)?;
        nn::check_finite(v, "avatar training loss")?;
        self.opt.backward_step(&loss)?;
        Ok(v)
    }
}

/// Per-observation tensors reused across steps.
pub struct PreparedView {
    pub cache: PoseCache,
    pub camera: CameraPose,
    pub target: Tensor,
}

pub fn prepare_views(model: &AvatarModel, obs: &[Observation]) -> Result<Vec<PreparedView>> {
    obs.iter()
        .map(|o| {
            Ok(PreparedView {
                cache: model.pose_cache(&o.pose)?,
                camera: o.camera,
                target: o.image.to_tensor(&Device::Cpu)?.to_dtype(model.dtype())?,
            })
        })
        .collect()
}

/// Supervised reconstruction training; returns the per-step loss trace.
pub fn train_baseline(model: &AvatarModel, frames: &[Observation], cfg: &TrainConfig, seed: u64) -> Result<Vec<f64>> {
    cfg.validate()?;
    if frames.is_empty() {
        return Err(Error::param("baseline training needs at least one frame"));
    }
    let views = prepare_views(model, frames)?;
    let mut trainer = Trainer::new(model, cfg.learning_rate, cfg.loss_weights())?;
    let mut rng: Rng = rng::stream(seed, "baseline-frames");
    let mut trace = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let batch: Vec<&PreparedView> = (0..cfg.batch_size)
            .map(|_| &views[rng.random_range(0..views.len())])
            .collect();
        let refs: Vec<(&PoseCache, &CameraPose, &Tensor)> =
            batch.iter().map(|v| (&v.cache, &v.camera, &v.target)).collect();
        let l = trainer.step(model, &refs, None)?;
        if step % 100 == 0 {
            log::debug!("baseline step {step}: loss {l:.5}");
        }
        trace.push(l);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::build_humanoid;
    use crate::body::HumanoidSpec;

    /// Two-joint rig with eight vertices around a short bar.
    pub(crate) fn micro_rig() -> (Skeleton, BodyMesh) {
        let sk = Skeleton {
            parents: vec![-1, 0],
            rest_offsets: vec![[0.0; 3], [0.0, 0.2, 0.0]],
            rotation_axis_limits: vec![[1.5; 3]; 2],
        };
        let mut vertices = Vec::new();
        let mut weights = Vec::new();
        for i in 0..8 {
            let a = i as f64 * std::f64::consts::FRAC_PI_4;
            let y = if i % 2 == 0 { 0.05 } else { 0.3 };
            vertices.push([0.12 * a.cos(), y, 0.12 * a.sin()]);
            let w1 = if y > 0.2 { 0.8 } else { 0.1 };
            weights.extend_from_slice(&[1.0 - w1, w1]);
        }
        let faces = (0..8u32).map(|i| [i, (i + 1) % 8, (i + 2) % 8]).collect();
        let mesh = BodyMesh {
            vertices,
            faces,
            skin_weights: weights,
            joint_count: 2,
            vertex_colors: vec![[0.5; 3]; 8],
        };
        (sk, mesh)
    }

    fn micro_config() -> AvatarConfig {
        AvatarConfig {
            grid: 4,
            feature_dim: 2,
            hidden: 6,
            ..AvatarConfig::default()
        }
    }

    #[test]
    fn zero_offset_head_keeps_vertices() {
        let (sk, mesh) = micro_rig();
        let m = AvatarModel::new(sk, mesh.clone(), micro_config(), 3, DType::F32).unwrap();
        let c = m.canonical_gaussians().unwrap();
        assert_eq!(c.len(), 8);
        for (a, b) in c.centers.iter().zip(&mesh.vertices) {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() < 1e-7);
            }
        }
        for q in &c.rotations {
            let n: f64 = q.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn triplane_lookup_matches_bilinear_oracle() {
        let (sk, mesh) = micro_rig();
        let m = AvatarModel::new(sk, mesh, micro_config(), 5, DType::F64).unwrap();
        let g = m.config.grid;
        let d = m.config.feature_dim;
        let planes: Vec<Vec<f64>> = m.triplane().to_vec2().unwrap();
        let pts = [[0.01, 0.17, -0.03], [0.11, 0.3, 0.1], [-0.2, -0.2, 0.5]];
        let got: Vec<Vec<f64>> = m.sample_features(&pts).unwrap().to_vec2().unwrap();
        let b = m.bounds;
        for (pi, p) in pts.iter().enumerate() {
            for (plane, (a, c)) in PLANES.iter().enumerate() {
                // Continuous grid coordinates, clamped to the field.
                let u = ((p[*a] - b.lo[*a]) / (b.hi[*a] - b.lo[*a])).clamp(0.0, 1.0) * (g - 1) as f64;
                let v = ((p[*c] - b.lo[*c]) / (b.hi[*c] - b.lo[*c])).clamp(0.0, 1.0) * (g - 1) as f64;
                for ch in 0..d {
                    let node = |i: usize, j: usize| planes[plane * g * g + j * g + i][ch];
                    // Sum of hat-function weights over every node.
                    let mut want = 0.0;
                    for j in 0..g {
                        for i in 0..g {
                            let wu = (1.0 - (u - i as f64).abs()).max(0.0);
                            let wv = (1.0 - (v - j as f64).abs()).max(0.0);
                            want += wu * wv * node(i, j);
                        }
                    }
                    let have = got[pi][plane * d + ch];
                    assert!((have - want).abs() < 1e-12, "point {pi} plane {plane}: {have} vs {want}");
                }
            }
        }
    }

    #[test]
    fn identity_pose_is_identity_map() {
        let (sk, mesh) = micro_rig();
        let m = AvatarModel::new(sk.clone(), mesh, micro_config(), 1, DType::F64).unwrap();
        let a = m.canonical_gaussians().unwrap();
        let b = m.pose_gaussians(&PoseVector::zeros(2)).unwrap();
        let pa = a.to_packed();
        let pb = b.to_packed();
        for (x, y) in pa.iter().zip(&pb) {
            assert!((x - y).abs() < 1e-7);
        }
    }

    #[test]
    fn rigid_subject_rotates_rigidly() {
        let (mut sk, mut mesh) = micro_rig();
        sk.rotation_axis_limits = vec![[std::f64::consts::FRAC_PI_2; 3]; 2];
        mesh.skin_weights = (0..8).flat_map(|_| [1.0, 0.0]).collect();
        let m = AvatarModel::new(sk.clone(), mesh.clone(), micro_config(), 1, DType::F64).unwrap();
        let mut pose = PoseVector::zeros(2);
        // Root z-rotation of 90°.
        pose.0[2] = 1.0;
        let posed = m.pose_gaussians(&pose).unwrap();
        let oracle = crate::body::pose_mesh(&sk, &mesh, &pose).unwrap();
        let canon = m.canonical_gaussians().unwrap();
        let rz = math::rot_z(std::f64::consts::FRAC_PI_2);
        for i in 0..8 {
            for k in 0..3 {
                assert!((posed.centers[i][k] - oracle[i][k]).abs() < 1e-9);
            }
            // Rotation composed with the joint rotation.
            let want = math::mat3_mul(&rz, &math::quat_to_mat3(canon.rotations[i]));
            let got = math::quat_to_mat3(posed.rotations[i]);
            for r in 0..3 {
                for c in 0..3 {
                    assert!((want[r][c] - got[r][c]).abs() < 1e-9);
                }
            }
            let n: f64 = posed.rotations[i].iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn humanoid_gaussian_count_matches_vertices() {
        let s = build_humanoid(&HumanoidSpec::default()).unwrap();
        let n = s.mesh.vertex_count();
        let m = AvatarModel::new(s.skeleton, s.mesh, AvatarConfig::default(), 0, DType::F32).unwrap();
        assert_eq!(m.canonical_gaussians().unwrap().len(), n);
    }

    #[test]
    fn zero_steps_leave_model_untouched() {
        let (sk, mesh) = micro_rig();
        let m = AvatarModel::new(sk, mesh, micro_config(), 2, DType::F32).unwrap();
        let before = m.fingerprint().unwrap();
        let obs = vec![Observation {
            image: Image::filled(8, 8, [0.3; 3]),
            pose: PoseVector::zeros(2),
            camera: CameraPose::new(0.0, 0.0, 1.0, 8, 8),
        }];
        let cfg = TrainConfig {
            steps: 0,
            ..TrainConfig::default()
        };
        let trace = train_baseline(&m, &obs, &cfg, 0).unwrap();
        assert!(trace.is_empty());
        assert_eq!(m.fingerprint().unwrap(), before);
    }

    #[test]
    fn triplane_gradient_matches_finite_differences() {
        let (sk, mesh) = micro_rig();
        let m = AvatarModel::new(sk, mesh, micro_config(), 8, DType::F64).unwrap();
        let pose = PoseVector(vec![0.1, -0.2, 0.3, 0.2, 0.0, -0.4]);
        let cam = CameraPose::new(25.0, 15.0, 0.9, 8, 8);
        let cache = m.pose_cache(&pose).unwrap();
        let target = Image::from_fn(8, 8, |y, x| [(x as f32) / 8.0, (y as f32) / 8.0, 0.4])
            .to_tensor(&Device::Cpu)
            .unwrap()
            .to_dtype(DType::F64)
            .unwrap();
        let trainer = Trainer::new(&m, 1e-3, LossWeights::default()).unwrap();
        let loss = trainer.loss(&m, &cache, &cam, &target).unwrap();
        let grads = loss.backward().unwrap();
        let var = m.params().get("triplane").unwrap().clone();
        let analytic: Vec<f64> = grads.get(var.as_tensor()).unwrap().flatten_all().unwrap().to_vec1().unwrap();
        let base: Vec<f64> = var.as_tensor().flatten_all().unwrap().to_vec1().unwrap();
        let shape = var.as_tensor().shape().clone();
        let h = 1e-6;
        let eval = |vals: &[f64]| {
            var.set(&Tensor::from_vec(vals.to_vec(), shape.clone(), &Device::Cpu).unwrap()).unwrap();
            nn::scalar(&trainer.loss(&m, &cache, &cam, &target).unwrap()).unwrap()
        };
        let (mut num, mut den) = (0.0, 0.0);
        let mut touched = 0;
        for i in 0..base.len() {
            if analytic[i] == 0.0 {
                continue;
            }
            touched += 1;
            let mut v = base.clone();
            v[i] += h;
            let up = eval(&v);
            v[i] -= 2.0 * h;
            let down = eval(&v);
            let fd = (up - down) / (2.0 * h);
            num += (fd - analytic[i]).powi(2);
            den += fd * fd;
        }
        eval(&base);
        assert!(touched > 10);
        let rel = (num / den).sqrt();
        assert!(rel < 2e-2, "relative error {rel}");
    }
}
