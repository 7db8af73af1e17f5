//! Run configuration: one TOML document with a table per module.
//!
//! Every key has a default, so an empty file is a valid configuration.
//! Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::LossWeights;

/// Environment variable that overrides `data.root`.
pub const DATA_DIR_ENV: &str = "TRIOMAN_DATA_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub data: DataConfig,
    pub avatar: AvatarConfig,
    pub baseline: TrainConfig,
    pub generator: PerturbationConfig,
    pub crop: CropSpec,
    pub refiner: RefinerConfig,
    pub examiner: ExaminerConfig,
    pub augment: AugmentConfig,
    pub ablation: AblationConfig,
}

/// Synthetic benchmark layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub root: PathBuf,
    pub height: usize,
    pub width: usize,
    pub clip_length: usize,
    /// Every `test_every`-th frame (counting from `test_every - 1`) is held out.
    pub test_every: usize,
    /// Extra pose variance applied to held-out frames so they show novel poses.
    pub test_pose_variance: f64,
    /// Extra camera angle variance (deg²) applied to held-out frames.
    pub test_camera_variance: f64,
    /// Peak normalized amplitude of the pose trajectory.
    pub pose_amplitude: f64,
    /// Total azimuth swept over the clip, in degrees.
    pub azimuth_sweep: f64,
    pub elevation: f64,
    pub distance: f64,
    pub fov_y: f64,
    /// Seed of the evaluation subject's body and texture.
    pub subject_seed: u64,
    /// Extra subjects used only to train the refiner and examiner.
    pub held_out_subjects: usize,
    pub radial_segments: usize,
    pub ring_spacing: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            root: PathBuf::from("data"),
            height: 128,
            width: 96,
            clip_length: 32,
            test_every: 4,
            test_pose_variance: 0.03,
            test_camera_variance: 3.0,
            pose_amplitude: 0.45,
            azimuth_sweep: 360.0,
            elevation: 5.0,
            distance: 3.3,
            fov_y: 40.0,
            subject_seed: 1,
            held_out_subjects: 3,
            radial_segments: 16,
            ring_spacing: 0.045,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AvatarConfig {
    /// Triplane resolution per axis.
    pub grid: usize,
    /// Channels per plane.
    pub feature_dim: usize,
    pub hidden: usize,
    /// Bounding-box margin as a fraction of the extent.
    pub margin: f64,
    pub init_opacity: f64,
}

impl Default for AvatarConfig {
    fn default() -> Self {
        Self {
            grid: 32,
            feature_dim: 16,
            hidden: 32,
            margin: 0.1,
            init_opacity: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub ssim_weight: f64,
    pub perceptual_weight: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 1200,
            learning_rate: 5e-3,
            batch_size: 1,
            ssim_weight: 0.2,
            perceptual_weight: 0.2,
        }
    }
}

impl TrainConfig {
    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            ssim: self.ssim_weight,
            perceptual: self.perceptual_weight,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.loss_weights().validate()?;
        if self.batch_size == 0 || !(self.learning_rate > 0.0) {
            return Err(Error::Config("baseline batch_size and learning_rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbationConfig {
    /// Variance of the per-entry normalized pose offset.
    pub pose_variance: f64,
    /// Variance of the azimuth and elevation offsets, in degrees².
    pub camera_variance: f64,
    pub candidates: usize,
    /// Overrides the master seed for generator draws when set.
    pub seed: Option<u64>,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        Self {
            pose_variance: 0.03,
            camera_variance: 3.0,
            candidates: 2,
            seed: None,
        }
    }
}

impl PerturbationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.pose_variance >= 0.0 && self.camera_variance >= 0.0) {
            return Err(Error::Config("generator variances must be non-negative".into()));
        }
        Ok(())
    }
}

/// Body-centric crop geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CropSpec {
    /// Fraction of each bbox side added around the mask bbox.
    pub extension: f64,
    pub height: usize,
    pub width: usize,
    /// Side of the square examiner crop.
    pub examiner_side: usize,
}

impl Default for CropSpec {
    fn default() -> Self {
        Self {
            extension: 0.2,
            height: 96,
            width: 46,
            examiner_side: 32,
        }
    }
}

impl CropSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.extension >= 0.0) || self.height == 0 || self.width == 0 || self.examiner_side == 0 {
            return Err(Error::Config("crop sizes must be positive and extension non-negative".into()));
        }
        if self.examiner_side > self.height.min(self.width) {
            return Err(Error::Config("examiner_side exceeds the crop".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefinerConfig {
    /// Conditioning timestep.
    pub tau: usize,
    /// Length of the timestep range the embedding is defined over.
    pub timesteps: usize,
    /// Latent channels.
    pub channels: usize,
    /// Hidden width of the codec.
    pub codec_width: usize,
    /// U-Net widths, finest first.
    pub widths: Vec<usize>,
    /// U-Net levels (from the coarsest) that carry joint attention.
    pub attention_levels: usize,
    pub heads: usize,
    pub use_texture: bool,
    pub use_geometry: bool,
    pub attention: bool,
    pub codec_steps: usize,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub ssim_weight: f64,
    pub perceptual_weight: f64,
    /// Largest |k| for the texture-condition frame offset.
    pub max_offset: usize,
    /// Training samples drawn from the auxiliary triplet sets.
    pub samples: usize,
    pub seed: Option<u64>,
}

impl Default for RefinerConfig {
    fn default() -> Self {
        Self {
            tau: 200,
            timesteps: 1000,
            channels: 32,
            codec_width: 48,
            widths: vec![32, 64, 128],
            attention_levels: 2,
            heads: 4,
            use_texture: true,
            use_geometry: true,
            attention: true,
            codec_steps: 300,
            steps: 900,
            batch_size: 2,
            learning_rate: 1e-3,
            ssim_weight: 0.2,
            perceptual_weight: 0.2,
            max_offset: 14,
            samples: 256,
            seed: None,
        }
    }
}

impl RefinerConfig {
    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            ssim: self.ssim_weight,
            perceptual: self.perceptual_weight,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.loss_weights().validate()?;
        if self.widths.is_empty() || self.attention_levels > self.widths.len() {
            return Err(Error::Config("refiner widths must be non-empty and cover attention_levels".into()));
        }
        if self.widths.iter().any(|w| w % 8 != 0) || self.channels == 0 || self.heads == 0 {
            return Err(Error::Config("refiner widths must be multiples of 8".into()));
        }
        if self.tau >= self.timesteps || self.batch_size == 0 || self.max_offset == 0 {
            return Err(Error::Config("refiner tau must be below timesteps; batch and offset positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExaminerConfig {
    pub patch: usize,
    pub dim: usize,
    pub layers: usize,
    pub heads: usize,
    /// Output channels of each examiner block.
    pub block_channels: Vec<usize>,
    /// Tokens are channels (true) or spatial patches (false).
    pub channel_tokens: bool,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Training samples drawn from the auxiliary triplet sets.
    pub samples: usize,
    pub seed: Option<u64>,
}

impl Default for ExaminerConfig {
    fn default() -> Self {
        Self {
            patch: 4,
            dim: 64,
            layers: 2,
            heads: 4,
            block_channels: vec![64, 32],
            channel_tokens: true,
            steps: 600,
            batch_size: 8,
            learning_rate: 1e-3,
            samples: 256,
            seed: None,
        }
    }
}

impl ExaminerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch == 0 || self.dim == 0 || self.block_channels.is_empty() || self.batch_size == 0 {
            return Err(Error::Config("examiner sizes must be positive".into()));
        }
        if self.dim % self.heads != 0 {
            return Err(Error::Config("examiner dim must be divisible by heads".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// GT steps only.
    Continued,
    /// Coarse frames used directly as pseudo ground truth.
    Generator,
    /// Refined candidate used as pseudo ground truth.
    GeneratorRefiner,
    /// Refined candidates gated by the examiner.
    Full,
}

impl Variant {
    pub fn label(&self) -> &'static str {
        match self {
            Variant::Continued => "continued baseline",
            Variant::Generator => "+Gen",
            Variant::GeneratorRefiner => "+Gen&Ref",
            Variant::Full => "+Gen&Ref&Exam",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub pseudo_gt_probability: f64,
    pub candidates_per_sample: usize,
    /// Fine-tuning steps appended after baseline training.
    pub steps: usize,
    pub learning_rate: f64,
    pub variant: Variant,
    /// Use the full reconstruction loss on pseudo steps (L1 only otherwise).
    pub full_loss: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            pseudo_gt_probability: 0.5,
            candidates_per_sample: 2,
            steps: 400,
            learning_rate: 2e-3,
            variant: Variant::Full,
            full_loss: true,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.pseudo_gt_probability) {
            return Err(Error::Config("pseudo_gt_probability must lie in [0, 1]".into()));
        }
        if self.candidates_per_sample == 0 || !(self.learning_rate > 0.0) {
            return Err(Error::Config("candidates_per_sample and learning_rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    /// Seeds for the baseline and fine-tuning runs; the shared modules use the master seed.
    pub seeds: Vec<u64>,
    /// Optional pose-variance sweep run with the full pipeline.
    pub pose_variance_sweep: Vec<f64>,
    /// Wall-clock budget in minutes; zero means unlimited.
    pub budget_minutes: f64,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            seeds: vec![1, 2, 3],
            pose_variance_sweep: Vec::new(),
            budget_minutes: 0.0,
        }
    }
}

impl Config {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file and applies the data-root environment override.
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::Missing { path: path.to_path_buf() });
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let Ok(dir) = std::env::var(DATA_DIR_ENV) {
            if !dir.is_empty() {
                cfg.data.root = PathBuf::from(dir);
            }
        } else if cfg.data.root.is_relative() {
            if let Some(parent) = path.parent() {
                cfg.data.root = parent.join(&cfg.data.root);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.data;
        if d.height < 16 || d.width < 16 || d.clip_length < 2 || d.test_every < 2 {
            return Err(Error::Config("data sizes too small (min 16 px, clip ≥ 2, test_every ≥ 2)".into()));
        }
        if !(d.distance > 0.0 && d.fov_y > 0.0 && d.fov_y < 180.0) {
            return Err(Error::Config("camera distance and fov must be positive".into()));
        }
        if !(0.0..=1.0).contains(&d.pose_amplitude) {
            return Err(Error::Config("pose_amplitude must lie in [0, 1]".into()));
        }
        if self.avatar.grid < 2 || self.avatar.feature_dim == 0 || !(0.0..1.0).contains(&self.avatar.init_opacity) {
            return Err(Error::Config("avatar grid ≥ 2, feature_dim > 0, init_opacity in (0,1)".into()));
        }
        self.baseline.validate()?;
        self.generator.validate()?;
        self.crop.validate()?;
        self.refiner.validate()?;
        self.examiner.validate()?;
        self.augment.validate()?;
        if self.crop.examiner_side > self.crop.height.min(self.crop.width) {
            return Err(Error::Config("examiner_side must fit inside the crop".into()));
        }
        if self.refiner.samples == 0 || self.examiner.samples == 0 {
            return Err(Error::Config("refiner and examiner sample counts must be positive".into()));
        }
        if self.crop.examiner_side % self.examiner.patch != 0 {
            return Err(Error::Config("examiner_side must be a multiple of the patch size".into()));
        }
        Ok(())
    }

    /// Short SHA-256 of the canonical JSON form, excluding the data root.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.data.root = PathBuf::new();
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))[..16].to_string()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
