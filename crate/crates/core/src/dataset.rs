//! Synthetic monocular videos, (GT, coarse, mesh) triplets and the
//! body-centric crops fed to the refiner and examiner.
//!
//! On-disk layout under the data root:
//!
//! ```text
//! subjects/<name>/manifest.json
//! subjects/<name>/frames/NNNN.png
//! subjects/<name>/masks/NNNN.png
//! triplets/<name>/manifest.json
//! triplets/<name>/coarse/NNNN.png
//! triplets/<name>/coarse_masks/NNNN.png
//! ```
//!
//! The evaluation subject is called `eval`; the subjects used to train the
//! refiner and examiner are `aux-0`, `aux-1`, ...

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::avatar::AvatarModel;
use crate::body::{build_humanoid, pose_mesh, rasterize, render_normal_map, HumanoidSpec, PoseVector, Subject};
use crate::camera::CameraPose;
use crate::checkpoint::write_atomic;
use crate::config::{CropSpec, DataConfig, PerturbationConfig};
use crate::error::{Error, Result};
use crate::generator::{sample_camera_perturbation, sample_pose_perturbation};
use crate::image::{Image, Mask, Rect};
use crate::math::{self, Vec3};
use crate::rng::{self, Rng};

pub const MANIFEST_VERSION: u32 = 1;
pub const EVAL_SUBJECT: &str = "eval";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// One frame's entry in a subject manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub index: usize,
    pub image: String,
    pub mask: String,
    pub pose: PoseVector,
    pub camera: CameraPose,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub subject_name: String,
    pub subject: HumanoidSpec,
    pub config_hash: String,
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    pub frames: Vec<FrameRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub image: Image,
    pub mask: Mask,
    pub pose: PoseVector,
    pub camera: CameraPose,
    pub split: Split,
}

/// A subject, its rig and its rendered clip.
#[derive(Debug, Clone)]
pub struct VideoDataset {
    pub name: String,
    pub subject: Subject,
    pub frames: Vec<Frame>,
    pub seed: u64,
}

pub fn aux_name(i: usize) -> String {
    format!("aux-{i}")
}

/// Names of every subject the data config describes, evaluation first.
pub fn subject_names(cfg: &DataConfig) -> Vec<String> {
    std::iter::once(EVAL_SUBJECT.to_string())
        .chain((0..cfg.held_out_subjects).map(aux_name))
        .collect()
}

/// Body spec for a named subject. Auxiliary subjects get their own seed and
/// a randomized build.
pub fn subject_spec(cfg: &DataConfig, name: &str) -> Result<HumanoidSpec> {
    let seed = if name == EVAL_SUBJECT {
        cfg.subject_seed
    } else {
        let i: u64 = name
            .strip_prefix("aux-")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::param(format!("unknown subject name {name:?}")))?;
        cfg.subject_seed + 1000 + i
    };
    let mut r = rng::stream(seed, "subject-shape");
    Ok(HumanoidSpec {
        seed,
        scale: r.random_range(0.92..1.06),
        girth: r.random_range(0.9..1.15),
        radial_segments: cfg.radial_segments,
        ring_spacing: cfg.ring_spacing,
    })
}

/// Area-weighted vertex normals.
fn vertex_normals(vertices: &[Vec3], faces: &[[u32; 3]]) -> Vec<Vec3> {
    let mut n = vec![[0.0; 3]; vertices.len()];
    for f in faces {
        let p = f.map(|i| vertices[i as usize]);
        let c = math::cross(math::sub(p[1], p[0]), math::sub(p[2], p[0]));
        for &i in f {
            n[i as usize] = math::add(n[i as usize], c);
        }
    }
    n.into_iter().map(math::normalize).collect()
}

/// Ground-truth renderer: textured, headlight-shaded mesh over black,
/// quantized to 8 bits. The mask is the rasterizer's coverage.
pub fn render_ground_truth(subject: &Subject, posed: &[Vec3], camera: &CameraPose) -> Result<(Image, Mask)> {
    let faces = &subject.mesh.faces;
    let (vis, stats) = rasterize(posed, faces, camera)?;
    if stats.degenerate_faces > 0 {
        log::warn!("ground truth: skipped {} degenerate faces", stats.degenerate_faces);
    }
    let normals = vertex_normals(posed, faces);
    let rot = camera.rotation();
    let canon = &subject.mesh.vertices;
    let mut img = Image::filled(camera.height, camera.width, [0.0; 3]);
    for (p, &f) in vis.face.iter().enumerate() {
        if f == crate::body::NO_FACE {
            continue;
        }
        let face = faces[f as usize];
        let b = vis.bary[p];
        let mut cp = [0.0; 3];
        let mut n = [0.0; 3];
        let mut wp = [0.0; 3];
        for k in 0..3 {
            let i = face[k] as usize;
            cp = math::add(cp, math::scale(canon[i], b[k]));
            n = math::add(n, math::scale(normals[i], b[k]));
            wp = math::add(wp, math::scale(posed[i], b[k]));
        }
        let albedo = subject.texture.eval(subject.face_parts[f as usize], cp, &subject.landmarks);
        let n_cam = math::mat3_vec(&rot, math::normalize(n));
        let view = math::normalize(camera.world_to_camera(wp));
        let shade = 0.7 + 0.3 * math::dot(n_cam, view).abs();
        let (y, x) = (p / camera.width, p % camera.width);
        img.set_pixel(y, x, albedo.map(|a| a * shade as f32));
    }
    Ok((img.quantized(), vis.mask()))
}

fn data_camera(cfg: &DataConfig, azimuth: f64) -> CameraPose {
    CameraPose {
        fov_y: cfg.fov_y,
        ..CameraPose::new(azimuth, cfg.elevation, cfg.distance, cfg.height, cfg.width)
    }
}

/// Whether frame `t` is held out.
pub fn is_test_frame(cfg: &DataConfig, t: usize) -> bool {
    t % cfg.test_every == cfg.test_every - 1
}

/// Smooth pose/camera trajectory: one sinusoid per joint axis, azimuth
/// sweeping linearly. Held-out frames receive an extra perturbation so they
/// show poses and views absent from training.
pub fn trajectory(cfg: &DataConfig, joint_count: usize, rng: &mut Rng) -> Vec<(PoseVector, CameraPose, Split)> {
    let n = 3 * joint_count;
    let waves: Vec<(f64, f64, f64)> = (0..n)
        .map(|_| {
            let amp = cfg.pose_amplitude * rng.random_range(0.3..1.0);
            let cycles = rng.random_range(1..=2) as f64;
            let phase = rng.random_range(0.0..2.0 * PI);
            (amp, cycles, phase)
        })
        .collect();
    let test_cfg = PerturbationConfig {
        pose_variance: cfg.test_pose_variance,
        camera_variance: cfg.test_camera_variance,
        ..PerturbationConfig::default()
    };
    let len = cfg.clip_length;
    (0..len)
        .map(|t| {
            let s = t as f64 / len as f64;
            let raw: Vec<f64> = waves.iter().map(|&(a, c, ph)| a * (2.0 * PI * c * s + ph).sin()).collect();
            if raw.iter().any(|v| v.abs() > 1.0) {
                log::warn!("trajectory exceeds pose limits at frame {t}; clamping");
            }
            let pose = PoseVector(raw).clamped();
            let camera = data_camera(cfg, cfg.azimuth_sweep * s);
            if is_test_frame(cfg, t) {
                let p = sample_pose_perturbation(&pose, &test_cfg, rng);
                let c = sample_camera_perturbation(&camera, &test_cfg, rng);
                (p, c, Split::Test)
            } else {
                (pose, camera, Split::Train)
            }
        })
        .collect()
}

/// Builds the subject and renders its clip.
pub fn synthesize_subject_video(cfg: &DataConfig, name: &str, seed: u64) -> Result<VideoDataset> {
    if cfg.clip_length < 2 {
        return Err(Error::param("clip length must be at least 2"));
    }
    let spec = subject_spec(cfg, name)?;
    let subject = build_humanoid(&spec)?;
    let mut r = rng::stream(seed, &format!("trajectory/{name}"));
    let frames = trajectory(cfg, subject.skeleton.joint_count(), &mut r)
        .into_iter()
        .map(|(pose, camera, split)| {
            let posed = pose_mesh(&subject.skeleton, &subject.mesh, &pose)?;
            let (image, mask) = render_ground_truth(&subject, &posed, &camera)?;
            Ok(Frame { image, mask, pose, camera, split })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(VideoDataset { name: name.to_string(), subject, frames, seed })
}

pub fn subject_dir(root: &Path, name: &str) -> PathBuf {
    root.join("subjects").join(name)
}

pub fn triplet_dir(root: &Path, name: &str) -> PathBuf {
    root.join("triplets").join(name)
}

fn frame_file(i: usize) -> String {
    format!("{i:04}.png")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    if !path.exists() {
        return Err(Error::Missing { path: path.to_path_buf() });
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

impl VideoDataset {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.frames.len()).filter(|&i| self.frames[i].split == split).collect()
    }

    pub fn manifest(&self, config_hash: &str) -> Manifest {
        let (height, width) = self.frames.first().map(|f| (f.image.height, f.image.width)).unwrap_or((0, 0));
        Manifest {
            version: MANIFEST_VERSION,
            subject_name: self.name.clone(),
            subject: self.subject.spec.clone(),
            config_hash: config_hash.to_string(),
            seed: self.seed,
            height,
            width,
            frames: self
                .frames
                .iter()
                .enumerate()
                .map(|(i, f)| FrameRecord {
                    index: i,
                    image: format!("frames/{}", frame_file(i)),
                    mask: format!("masks/{}", frame_file(i)),
                    pose: f.pose.clone(),
                    camera: f.camera,
                    split: f.split,
                })
                .collect(),
        }
    }

    /// Writes frames, masks and the manifest under `root`.
    pub fn save(&self, root: &Path, config_hash: &str) -> Result<()> {
        let dir = subject_dir(root, &self.name);
        for (i, f) in self.frames.iter().enumerate() {
            f.image.save_png(&dir.join("frames").join(frame_file(i)))?;
            f.mask.save_png(&dir.join("masks").join(frame_file(i)))?;
        }
        write_json(&dir.join("manifest.json"), &self.manifest(config_hash))
    }

    pub fn load(root: &Path, name: &str) -> Result<Self> {
        let dir = subject_dir(root, name);
        let m: Manifest = read_json(&dir.join("manifest.json"))?;
        if m.version != MANIFEST_VERSION {
            return Err(Error::Format(format!("unsupported manifest version {}", m.version)));
        }
        let subject = build_humanoid(&m.subject)?;
        let frames = m
            .frames
            .iter()
            .map(|r| {
                r.pose.validate_for(&subject.skeleton)?;
                Ok(Frame {
                    image: Image::load_png(&dir.join(&r.image))?,
                    mask: Mask::load_png(&dir.join(&r.mask))?,
                    pose: r.pose.clone(),
                    camera: r.camera,
                    split: r.split,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { name: m.subject_name, subject, frames, seed: m.seed })
    }
}

/// Reads just the manifest of a subject.
pub fn load_manifest(root: &Path, name: &str) -> Result<Manifest> {
    read_json(&subject_dir(root, name).join("manifest.json"))
}

/// Ground truth and baseline render for one frame.
#[derive(Debug, Clone)]
pub struct Triplet {
    pub index: usize,
    pub gt: Image,
    pub gt_mask: Mask,
    pub coarse: Image,
    /// Coverage of the baseline render (accumulated opacity above one half).
    pub coarse_mask: Mask,
    pub pose: PoseVector,
    pub camera: CameraPose,
    pub split: Split,
}

#[derive(Debug, Clone)]
pub struct TripletSet {
    pub name: String,
    pub subject: Subject,
    pub triplets: Vec<Triplet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripletManifest {
    pub version: u32,
    pub subject_name: String,
    pub config_hash: String,
    pub seed: u64,
    /// Fingerprint of the baseline that rendered the coarse frames.
    pub baseline: String,
    pub frames: Vec<TripletRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripletRecord {
    pub index: usize,
    pub coarse: String,
    pub coarse_mask: String,
}

/// Renders the baseline at every recorded (pose, camera).
pub fn build_triplets(dataset: &VideoDataset, baseline: &AvatarModel) -> Result<TripletSet> {
    if baseline.skeleton != dataset.subject.skeleton || baseline.gaussian_count() != dataset.subject.mesh.vertex_count() {
        return Err(Error::validation(format!(
            "baseline was not built for subject {}",
            dataset.name
        )));
    }
    let triplets = dataset
        .frames
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let r = baseline.render_detailed(&f.pose, &f.camera)?;
            if r.height != f.image.height || r.width != f.image.width {
                return Err(Error::validation("camera resolution differs from the frame"));
            }
            Ok(Triplet {
                index: i,
                gt: f.image.clone(),
                gt_mask: f.mask.clone(),
                coarse: r.image().quantized(),
                coarse_mask: r.coverage(),
                pose: f.pose.clone(),
                camera: f.camera,
                split: f.split,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TripletSet { name: dataset.name.clone(), subject: dataset.subject.clone(), triplets })
}

impl TripletSet {
    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    /// Posed mesh vertices of frame `t`.
    pub fn posed_vertices(&self, t: usize) -> Result<Vec<Vec3>> {
        pose_mesh(&self.subject.skeleton, &self.subject.mesh, &self.triplets[t].pose)
    }

    /// Body normal map of frame `t` under its own camera.
    pub fn normal_map(&self, t: usize) -> Result<Image> {
        let v = self.posed_vertices(t)?;
        Ok(render_normal_map(&v, &self.subject.mesh.faces, &self.triplets[t].camera)?.image)
    }

    pub fn save(&self, root: &Path, config_hash: &str, seed: u64, baseline: &str) -> Result<()> {
        let dir = triplet_dir(root, &self.name);
        let mut frames = Vec::with_capacity(self.len());
        for t in &self.triplets {
            let c = format!("coarse/{}", frame_file(t.index));
            let m = format!("coarse_masks/{}", frame_file(t.index));
            t.coarse.save_png(&dir.join(&c))?;
            t.coarse_mask.save_png(&dir.join(&m))?;
            frames.push(TripletRecord { index: t.index, coarse: c, coarse_mask: m });
        }
        let manifest = TripletManifest {
            version: MANIFEST_VERSION,
            subject_name: self.name.clone(),
            config_hash: config_hash.to_string(),
            seed,
            baseline: baseline.to_string(),
            frames,
        };
        write_json(&dir.join("manifest.json"), &manifest)
    }

    /// Joins the stored coarse frames with the subject's dataset.
    pub fn load(root: &Path, dataset: &VideoDataset) -> Result<Self> {
        let dir = triplet_dir(root, &dataset.name);
        let m: TripletManifest = read_json(&dir.join("manifest.json"))?;
        if m.frames.len() != dataset.len() {
            return Err(Error::validation(format!(
                "triplet set has {} frames, dataset {} has {}",
                m.frames.len(),
                dataset.name,
                dataset.len()
            )));
        }
        let triplets = m
            .frames
            .iter()
            .zip(&dataset.frames)
            .map(|(r, f)| {
                Ok(Triplet {
                    index: r.index,
                    gt: f.image.clone(),
                    gt_mask: f.mask.clone(),
                    coarse: Image::load_png(&dir.join(&r.coarse))?,
                    coarse_mask: Mask::load_png(&dir.join(&r.coarse_mask))?,
                    pose: f.pose.clone(),
                    camera: f.camera,
                    split: f.split,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { name: dataset.name.clone(), subject: dataset.subject.clone(), triplets })
    }
}

/// Mask bbox grown by `extension` of each side length (half on either
/// side), clipped to the frame. Empty masks signal a skipped sample.
pub fn crop_rect(mask: &Mask, extension: f64) -> Result<Rect> {
    let b = mask.bbox().ok_or_else(|| Error::SkipSample("empty mask".into()))?;
    let grow = |start: usize, len: usize, limit: usize| {
        let extra = (extension * len as f64).round() as usize;
        let before = extra / 2;
        let lo = start.saturating_sub(before);
        let hi = (start + len + (extra - before)).min(limit);
        (lo, hi - lo)
    };
    let (top, height) = grow(b.top, b.height, mask.height);
    let (left, width) = grow(b.left, b.width, mask.width);
    Ok(Rect { top, left, height, width })
}

/// Crops the extended mask bbox and resamples it to the spec's size.
pub fn crop_and_resize(image: &Image, mask: &Mask, spec: &CropSpec) -> Result<(Image, Rect)> {
    if image.height != mask.height || image.width != mask.width {
        return Err(Error::param("image and mask sizes differ"));
    }
    let rect = crop_rect(mask, spec.extension)?;
    Ok((image.resample_rect(rect, spec.height, spec.width), rect))
}

/// Uniformly placed `side × side` crop; returns the crop and its top-left.
pub fn random_square_crop(image: &Image, side: usize, rng: &mut Rng) -> Result<(Image, usize, usize)> {
    if side == 0 || side > image.height || side > image.width {
        return Err(Error::param(format!(
            "cannot take a {side}px square from a {}×{} image",
            image.height, image.width
        )));
    }
    let top = rng.random_range(0..=image.height - side);
    let left = rng.random_range(0..=image.width - side);
    Ok((square_at(image, side, top, left), top, left))
}

pub fn center_square_crop(image: &Image, side: usize) -> Result<Image> {
    if side == 0 || side > image.height || side > image.width {
        return Err(Error::param(format!("cannot take a {side}px square from a {}×{} image", image.height, image.width)));
    }
    Ok(square_at(image, side, (image.height - side) / 2, (image.width - side) / 2))
}

fn square_at(image: &Image, side: usize, top: usize, left: usize) -> Image {
    Image::from_fn(side, side, |y, x| image.pixel(top + y, left + x))
}

/// Texture-condition offset for frame `t`: uniform over
/// `{-max..max} \ {0}` restricted to the clip.
pub fn sample_offset(t: usize, len: usize, max_offset: usize, rng: &mut Rng) -> Result<isize> {
    let valid: Vec<isize> = (-(max_offset as isize)..=max_offset as isize)
        .filter(|&k| k != 0)
        .filter(|&k| {
            let j = t as isize + k;
            j >= 0 && (j as usize) < len
        })
        .collect();
    if valid.is_empty() {
        return Err(Error::param("clip too short for a texture-condition frame"));
    }
    Ok(valid[rng.random_range(0..valid.len())])
}

/// Refiner training sample, all four images sharing one crop.
#[derive(Debug, Clone)]
pub struct RefinerSample {
    pub target: Image,
    pub coarse: Image,
    pub texture: Image,
    pub geometry: Image,
    pub index: usize,
    pub offset: isize,
    pub rect: Rect,
}

/// Draws `(T, k)` uniformly.
pub fn sample_refiner_pair(set: &TripletSet, max_offset: usize, rng: &mut Rng) -> Result<(usize, isize)> {
    if set.len() < 2 {
        return Err(Error::param("refiner pairs need a clip of at least two frames"));
    }
    let t = rng.random_range(0..set.len());
    Ok((t, sample_offset(t, set.len(), max_offset, rng)?))
}

/// Crops (GT at T, coarse at T, GT at T+k, normal map at T) with the coarse
/// mask's geometry.
pub fn assemble_refiner_sample(set: &TripletSet, t: usize, k: isize, crop: &CropSpec) -> Result<RefinerSample> {
    let j = t as isize + k;
    if j < 0 || j as usize >= set.len() || k == 0 {
        return Err(Error::param(format!("offset {k} invalid at frame {t}")));
    }
    let tr = &set.triplets[t];
    let rect = crop_rect(&tr.coarse_mask, crop.extension)?;
    let cut = |img: &Image| img.resample_rect(rect, crop.height, crop.width);
    Ok(RefinerSample {
        target: cut(&tr.gt),
        coarse: cut(&tr.coarse),
        texture: cut(&set.triplets[j as usize].gt),
        geometry: cut(&set.normal_map(t)?),
        index: t,
        offset: k,
        rect,
    })
}
