//! Procedural capsule-limb humanoid with distance-based skinning and a
//! procedural texture.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{BodyMesh, Skeleton};
use crate::error::Result;
use crate::math::{self, Vec3};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BodyPart {
    Torso,
    Head,
    UpperArm,
    Forearm,
    Thigh,
    Shin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanoidSpec {
    pub seed: u64,
    /// Uniform size multiplier (1.0 ≈ 1.75 m tall).
    pub scale: f64,
    /// Limb and torso radius multiplier.
    pub girth: f64,
    /// Vertices around each ring.
    pub radial_segments: usize,
    /// Target spacing between rings in meters.
    pub ring_spacing: f64,
}

impl Default for HumanoidSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            scale: 1.0,
            girth: 1.0,
            radial_segments: 16,
            ring_spacing: 0.045,
        }
    }
}

/// Colors and pattern frequencies of one subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Texture {
    pub shirt: [f32; 3],
    pub stripe: [f32; 3],
    pub stripe_period: f64,
    pub emblem: [f32; 3],
    pub pants: [f32; 3],
    pub pants_seam: [f32; 3],
    pub skin: [f32; 3],
    pub hair: [f32; 3],
    pub shoes: [f32; 3],
}

/// One synthetic person: rig, mesh and appearance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subject {
    pub spec: HumanoidSpec,
    pub skeleton: Skeleton,
    pub mesh: BodyMesh,
    pub face_parts: Vec<BodyPart>,
    pub texture: Texture,
    /// Canonical landmark heights used by the texture (belt, head centre, ankle).
    pub landmarks: Landmarks,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Landmarks {
    pub belt_y: f64,
    pub chest_centre: Vec3,
    pub head_centre: Vec3,
    pub ankle_y: f64,
}

// Joint layout.
const PELVIS: usize = 0;
const CHEST: usize = 1;
const HEAD: usize = 2;
const L_UPPER_ARM: usize = 3;
const L_FOREARM: usize = 4;
const R_UPPER_ARM: usize = 5;
const R_FOREARM: usize = 6;
const L_THIGH: usize = 7;
const L_SHIN: usize = 8;
const R_THIGH: usize = 9;
const R_SHIN: usize = 10;
const JOINTS: usize = 11;

struct Capsule {
    a: Vec3,
    b: Vec3,
    r0: f64,
    r1: f64,
    /// Radius multiplier along the second cross-section axis.
    ratio: f64,
    part: BodyPart,
    candidates: Vec<usize>,
}

fn palette_color(rng: &mut rng::Rng, palette: &[[f32; 3]]) -> [f32; 3] {
    let c = palette[rng.random_range(0..palette.len())];
    let jitter = |v: f32, r: &mut rng::Rng| (v + r.random_range(-0.05f32..0.05)).clamp(0.0, 1.0);
    [jitter(c[0], rng), jitter(c[1], rng), jitter(c[2], rng)]
}

fn random_texture(seed: u64) -> Texture {
    let mut r = rng::stream(seed, "texture");
    let shirts = [
        [0.80, 0.15, 0.15],
        [0.15, 0.45, 0.80],
        [0.20, 0.65, 0.30],
        [0.90, 0.75, 0.20],
        [0.55, 0.25, 0.65],
        [0.95, 0.95, 0.92],
    ];
    let pants = [
        [0.12, 0.15, 0.35],
        [0.25, 0.25, 0.25],
        [0.45, 0.35, 0.22],
        [0.10, 0.30, 0.30],
    ];
    let skins = [
        [0.96, 0.80, 0.69],
        [0.87, 0.67, 0.52],
        [0.64, 0.45, 0.33],
        [0.42, 0.29, 0.22],
    ];
    let hair = [[0.08, 0.06, 0.05], [0.35, 0.22, 0.10], [0.75, 0.60, 0.35]];
    let shirt = palette_color(&mut r, &shirts);
    let stripe = [
        (1.0 - shirt[0]) * 0.7 + 0.15,
        (1.0 - shirt[1]) * 0.7 + 0.15,
        (1.0 - shirt[2]) * 0.7 + 0.15,
    ];
    Texture {
        shirt,
        stripe,
        stripe_period: r.random_range(0.07..0.12),
        emblem: palette_color(&mut r, &shirts),
        pants: palette_color(&mut r, &pants),
        pants_seam: palette_color(&mut r, &shirts),
        skin: palette_color(&mut r, &skins),
        hair: palette_color(&mut r, &hair),
        shoes: [0.06, 0.06, 0.07],
    }
}

impl Texture {
    /// Albedo at a canonical surface point.
    pub fn eval(&self, part: BodyPart, p: Vec3, marks: &Landmarks) -> [f32; 3] {
        let stripes = |y: f64| (2.0 * std::f64::consts::PI * y / self.stripe_period).sin() > 0.35;
        match part {
            BodyPart::Torso => {
                if p[1] < marks.belt_y {
                    self.pants
                } else {
                    let dx = p[0] - marks.chest_centre[0];
                    let dy = p[1] - marks.chest_centre[1];
                    if p[2] > 0.0 && dx * dx + dy * dy < 0.07 * 0.07 {
                        self.emblem
                    } else if stripes(p[1]) {
                        self.stripe
                    } else {
                        self.shirt
                    }
                }
            }
            BodyPart::UpperArm => {
                if stripes(p[1]) {
                    self.stripe
                } else {
                    self.shirt
                }
            }
            BodyPart::Forearm => self.skin,
            BodyPart::Head => {
                let rel = math::sub(p, marks.head_centre);
                if rel[1] > 0.025 || rel[2] < -0.04 {
                    self.hair
                } else {
                    self.skin
                }
            }
            BodyPart::Thigh | BodyPart::Shin => {
                if p[1] < marks.ankle_y + 0.09 {
                    self.shoes
                } else if p[0].abs() > 0.02 && (p[0].abs() - 0.14).abs() < 0.012 {
                    self.pants_seam
                } else {
                    self.pants
                }
            }
        }
    }
}

fn perpendicular_basis(u: Vec3) -> (Vec3, Vec3) {
    let reference = if u[2].abs() < 0.9 {
        [0.0, 0.0, 1.0]
    } else {
        [1.0, 0.0, 0.0]
    };
    let e1 = math::normalize(math::cross(u, reference));
    let e2 = math::cross(u, e1);
    (e1, e2)
}

fn closest_on_segment(p: Vec3, a: Vec3, b: Vec3) -> Vec3 {
    let d = math::sub(b, a);
    let len2 = math::dot(d, d);
    if len2 < 1e-18 {
        return a;
    }
    let t = (math::dot(math::sub(p, a), d) / len2).clamp(0.0, 1.0);
    math::add(a, math::scale(d, t))
}

fn segment_distance(p: Vec3, a: Vec3, b: Vec3) -> f64 {
    math::norm(math::sub(p, closest_on_segment(p, a, b)))
}

struct MeshBuilder {
    vertices: Vec<Vec3>,
    vertex_owner: Vec<usize>,
    faces: Vec<[u32; 3]>,
    face_parts: Vec<BodyPart>,
}

impl MeshBuilder {
    fn add_capsule(&mut self, c: &Capsule, owner: usize, segments: usize, spacing: f64) {
        let axis = math::sub(c.b, c.a);
        let len = math::norm(axis);
        let u = if len > 1e-9 {
            math::scale(axis, 1.0 / len)
        } else {
            [0.0, 1.0, 0.0]
        };
        let (e1, e2) = perpendicular_basis(u);
        // Profile: list of (axial offset from a, radius); poles handled separately.
        let cap_rings = ((0.5 * std::f64::consts::PI * c.r0.max(c.r1)) / spacing)
            .ceil()
            .max(2.0) as usize;
        let body_rings = (len / spacing).ceil().max(1.0) as usize;
        let mut profile: Vec<(f64, f64)> = Vec::new();
        for i in 1..cap_rings {
            let ang = 0.5 * std::f64::consts::PI * i as f64 / cap_rings as f64;
            profile.push((-c.r0 * ang.cos(), c.r0 * ang.sin()));
        }
        if len > 1e-9 {
            for i in 0..=body_rings {
                let t = i as f64 / body_rings as f64;
                profile.push((t * len, c.r0 + (c.r1 - c.r0) * t));
            }
        } else {
            profile.push((0.0, c.r0));
        }
        for i in (1..cap_rings).rev() {
            let ang = 0.5 * std::f64::consts::PI * i as f64 / cap_rings as f64;
            profile.push((len + c.r1 * ang.cos(), c.r1 * ang.sin()));
        }
        let base = self.vertices.len() as u32;
        let bottom_pole = math::sub(c.a, math::scale(u, c.r0));
        let top_pole = math::add(c.b, math::scale(u, c.r1));
        self.vertices.push(bottom_pole);
        self.vertex_owner.push(owner);
        for &(offset, radius) in &profile {
            let centre = math::add(c.a, math::scale(u, offset));
            for s in 0..segments {
                let phi = 2.0 * std::f64::consts::PI * s as f64 / segments as f64;
                let dir = math::add(
                    math::scale(e1, phi.cos() * radius),
                    math::scale(e2, phi.sin() * radius * c.ratio),
                );
                self.vertices.push(math::add(centre, dir));
                self.vertex_owner.push(owner);
            }
        }
        self.vertices.push(top_pole);
        self.vertex_owner.push(owner);
        let ring = |r: usize, s: usize| base + 1 + (r * segments + s % segments) as u32;
        let top = base + 1 + (profile.len() * segments) as u32;
        let push = |f: [u32; 3], builder: &mut MeshBuilder| {
            builder.faces.push(f);
            builder.face_parts.push(c.part);
        };
        for s in 0..segments {
            push([base, ring(0, s + 1), ring(0, s)], self);
        }
        for r in 0..profile.len() - 1 {
            for s in 0..segments {
                push([ring(r, s), ring(r, s + 1), ring(r + 1, s + 1)], self);
                push([ring(r, s), ring(r + 1, s + 1), ring(r + 1, s)], self);
            }
        }
        let last = profile.len() - 1;
        for s in 0..segments {
            push([top, ring(last, s), ring(last, s + 1)], self);
        }
        // Orient every face outward relative to the capsule axis.
        let first_face = self.faces.len() - (segments * 2 + (profile.len() - 1) * segments * 2);
        for f in &mut self.faces[first_face..] {
            let [p0, p1, p2] = f.map(|i| self.vertices[i as usize]);
            let n = math::cross(math::sub(p1, p0), math::sub(p2, p0));
            let centroid = math::scale(math::add(math::add(p0, p1), p2), 1.0 / 3.0);
            let outward = math::sub(centroid, closest_on_segment(centroid, c.a, c.b));
            if math::dot(n, outward) < 0.0 {
                f.swap(1, 2);
            }
        }
    }
}

/// Builds the default 11-joint humanoid for `spec`.
pub fn build_humanoid(spec: &HumanoidSpec) -> Result<Subject> {
    let s = spec.scale;
    let g = spec.girth * s;
    let v = |x: f64, y: f64, z: f64| [x * s, y * s, z * s];

    let mut parents = vec![0i32; JOINTS];
    let mut offsets = vec![[0.0; 3]; JOINTS];
    parents[PELVIS] = -1;
    offsets[PELVIS] = v(0.0, 0.0, 0.0);
    parents[CHEST] = PELVIS as i32;
    offsets[CHEST] = v(0.0, 0.24, 0.0);
    parents[HEAD] = CHEST as i32;
    offsets[HEAD] = v(0.0, 0.34, 0.0);
    parents[L_UPPER_ARM] = CHEST as i32;
    offsets[L_UPPER_ARM] = v(0.19, 0.28, 0.0);
    parents[L_FOREARM] = L_UPPER_ARM as i32;
    offsets[L_FOREARM] = v(0.06, -0.28, 0.0);
    parents[R_UPPER_ARM] = CHEST as i32;
    offsets[R_UPPER_ARM] = v(-0.19, 0.28, 0.0);
    parents[R_FOREARM] = R_UPPER_ARM as i32;
    offsets[R_FOREARM] = v(-0.06, -0.28, 0.0);
    parents[L_THIGH] = PELVIS as i32;
    offsets[L_THIGH] = v(0.095, -0.06, 0.0);
    parents[L_SHIN] = L_THIGH as i32;
    offsets[L_SHIN] = v(0.0, -0.40, 0.0);
    parents[R_THIGH] = PELVIS as i32;
    offsets[R_THIGH] = v(-0.095, -0.06, 0.0);
    parents[R_SHIN] = R_THIGH as i32;
    offsets[R_SHIN] = v(0.0, -0.40, 0.0);

    let mut limits = vec![[0.0; 3]; JOINTS];
    limits[PELVIS] = [0.25, 0.5, 0.2];
    limits[CHEST] = [0.35, 0.4, 0.3];
    limits[HEAD] = [0.5, 0.7, 0.4];
    limits[L_UPPER_ARM] = [1.3, 0.6, 1.1];
    limits[R_UPPER_ARM] = [1.3, 0.6, 1.1];
    limits[L_FOREARM] = [1.4, 0.3, 0.3];
    limits[R_FOREARM] = [1.4, 0.3, 0.3];
    limits[L_THIGH] = [1.0, 0.4, 0.5];
    limits[R_THIGH] = [1.0, 0.4, 0.5];
    limits[L_SHIN] = [1.2, 0.2, 0.2];
    limits[R_SHIN] = [1.2, 0.2, 0.2];

    let skeleton = Skeleton {
        parents,
        rest_offsets: offsets,
        rotation_axis_limits: limits,
    };
    skeleton.validate()?;
    let jp = skeleton.rest_positions();

    let wrist_l = math::add(jp[L_FOREARM], v(0.03, -0.25, 0.0));
    let wrist_r = math::add(jp[R_FOREARM], v(-0.03, -0.25, 0.0));
    let ankle_l = math::add(jp[L_SHIN], v(0.0, -0.40, 0.0));
    let ankle_r = math::add(jp[R_SHIN], v(0.0, -0.40, 0.0));
    let head_top = math::add(jp[HEAD], v(0.0, 0.24, 0.0));
    // Bone segment per joint, used for skinning distances.
    let bones: Vec<(Vec3, Vec3)> = vec![
        (jp[PELVIS], jp[CHEST]),
        (jp[CHEST], jp[HEAD]),
        (jp[HEAD], head_top),
        (jp[L_UPPER_ARM], jp[L_FOREARM]),
        (jp[L_FOREARM], wrist_l),
        (jp[R_UPPER_ARM], jp[R_FOREARM]),
        (jp[R_FOREARM], wrist_r),
        (jp[L_THIGH], jp[L_SHIN]),
        (jp[L_SHIN], ankle_l),
        (jp[R_THIGH], jp[R_SHIN]),
        (jp[R_SHIN], ankle_r),
    ];

    let torso_all = vec![PELVIS, CHEST, L_UPPER_ARM, R_UPPER_ARM, L_THIGH, R_THIGH];
    let head_centre = math::add(jp[HEAD], v(0.0, 0.12, 0.0));
    let capsules = vec![
        (
            Capsule {
                a: math::add(jp[PELVIS], v(0.0, -0.04, 0.0)),
                b: math::add(jp[HEAD], v(0.0, -0.06, 0.0)),
                r0: 0.15 * g,
                r1: 0.16 * g,
                ratio: 0.62,
                part: BodyPart::Torso,
                candidates: torso_all,
            },
            CHEST,
        ),
        (
            Capsule {
                a: head_centre,
                b: head_centre,
                r0: 0.105 * s,
                r1: 0.105 * s,
                ratio: 1.0,
                part: BodyPart::Head,
                candidates: vec![CHEST, HEAD],
            },
            HEAD,
        ),
        (
            Capsule {
                a: jp[L_UPPER_ARM],
                b: jp[L_FOREARM],
                r0: 0.052 * g,
                r1: 0.045 * g,
                ratio: 1.0,
                part: BodyPart::UpperArm,
                candidates: vec![CHEST, L_UPPER_ARM, L_FOREARM],
            },
            L_UPPER_ARM,
        ),
        (
            Capsule {
                a: jp[L_FOREARM],
                b: wrist_l,
                r0: 0.043 * g,
                r1: 0.036 * g,
                ratio: 1.0,
                part: BodyPart::Forearm,
                candidates: vec![L_UPPER_ARM, L_FOREARM],
            },
            L_FOREARM,
        ),
        (
            Capsule {
                a: jp[R_UPPER_ARM],
                b: jp[R_FOREARM],
                r0: 0.052 * g,
                r1: 0.045 * g,
                ratio: 1.0,
                part: BodyPart::UpperArm,
                candidates: vec![CHEST, R_UPPER_ARM, R_FOREARM],
            },
            R_UPPER_ARM,
        ),
        (
            Capsule {
                a: jp[R_FOREARM],
                b: wrist_r,
                r0: 0.043 * g,
                r1: 0.036 * g,
                ratio: 1.0,
                part: BodyPart::Forearm,
                candidates: vec![R_UPPER_ARM, R_FOREARM],
            },
            R_FOREARM,
        ),
        (
            Capsule {
                a: jp[L_THIGH],
                b: jp[L_SHIN],
                r0: 0.078 * g,
                r1: 0.06 * g,
                ratio: 1.0,
                part: BodyPart::Thigh,
                candidates: vec![PELVIS, L_THIGH, L_SHIN],
            },
            L_THIGH,
        ),
        (
            Capsule {
                a: jp[L_SHIN],
                b: ankle_l,
                r0: 0.056 * g,
                r1: 0.045 * g,
                ratio: 1.0,
                part: BodyPart::Shin,
                candidates: vec![L_THIGH, L_SHIN],
            },
            L_SHIN,
        ),
        (
            Capsule {
                a: jp[R_THIGH],
                b: jp[R_SHIN],
                r0: 0.078 * g,
                r1: 0.06 * g,
                ratio: 1.0,
                part: BodyPart::Thigh,
                candidates: vec![PELVIS, R_THIGH, R_SHIN],
            },
            R_THIGH,
        ),
        (
            Capsule {
                a: jp[R_SHIN],
                b: ankle_r,
                r0: 0.056 * g,
                r1: 0.045 * g,
                ratio: 1.0,
                part: BodyPart::Shin,
                candidates: vec![R_THIGH, R_SHIN],
            },
            R_SHIN,
        ),
    ];

    let mut builder = MeshBuilder {
        vertices: Vec::new(),
        vertex_owner: Vec::new(),
        faces: Vec::new(),
        face_parts: Vec::new(),
    };
    let mut vertex_capsule = Vec::new();
    for (ci, (cap, owner)) in capsules.iter().enumerate() {
        let before = builder.vertices.len();
        builder.add_capsule(cap, *owner, spec.radial_segments.max(3), spec.ring_spacing * s);
        vertex_capsule.extend(std::iter::repeat_n(ci, builder.vertices.len() - before));
    }

    let sigma = 0.03 * s;
    let mut weights = vec![0.0; builder.vertices.len() * JOINTS];
    for (vi, &p) in builder.vertices.iter().enumerate() {
        let cap = &capsules[vertex_capsule[vi]].0;
        let dists: Vec<f64> = cap
            .candidates
            .iter()
            .map(|&j| segment_distance(p, bones[j].0, bones[j].1))
            .collect();
        let dmin = dists.iter().cloned().fold(f64::INFINITY, f64::min);
        let row = &mut weights[vi * JOINTS..(vi + 1) * JOINTS];
        for (&j, &d) in cap.candidates.iter().zip(&dists) {
            let w = (-((d - dmin) / sigma).powi(2)).exp();
            if w > 1e-3 {
                row[j] += w;
            }
        }
        // The owning joint always participates so isolated vertices stay rigid.
        if row.iter().all(|&w| w == 0.0) {
            row[builder.vertex_owner[vi]] = 1.0;
        }
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|w| *w /= total);
    }

    let texture = random_texture(spec.seed);
    let landmarks = Landmarks {
        belt_y: jp[PELVIS][1] + 0.02 * s,
        chest_centre: math::add(jp[CHEST], v(0.0, 0.14, 0.0)),
        head_centre,
        ankle_y: ankle_l[1],
    };
    // Vertex colors: the texture evaluated at each vertex, using the part of its capsule.
    let vertex_colors = builder
        .vertices
        .iter()
        .zip(&vertex_capsule)
        .map(|(&p, &ci)| texture.eval(capsules[ci].0.part, p, &landmarks))
        .collect();

    let mesh = BodyMesh {
        vertices: builder.vertices,
        faces: builder.faces,
        skin_weights: weights,
        joint_count: JOINTS,
        vertex_colors,
    };
    mesh.validate()?;
    Ok(Subject {
        spec: spec.clone(),
        skeleton,
        mesh,
        face_parts: builder.face_parts,
        texture,
        landmarks,
    })
}
