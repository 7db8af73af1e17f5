//! One-step refiner: a latent codec, a small U-Net over the stacked
//! (coarse, texture, geometry) latents with joint attention across all three
//! views, and paste-back into the full frame.
//!
//! The coarse latent plays the role of the noisy sample at a fixed timestep;
//! nothing is sampled, so a trained refiner is a deterministic function.

use candle_core::{DType, Device, Module, Tensor, D};
use candle_nn::{AdamW, Conv2d, GroupNorm, Linear, Optimizer, ParamsAdamW};
use rand::Rng as _;
use serde_json::json;

use crate::checkpoint::{Checkpoint, CheckpointMeta};
use crate::config::{CropSpec, RefinerConfig};
use crate::dataset::{crop_rect, RefinerSample};
use crate::error::{Error, Result};
use crate::generator::CoarseSample;
use crate::image::Image;
use crate::nn::{self, conv2d, conv2d_zero, group_norm, linear, linear_zero, ConvSpec, Init, LossWeights, Mlp, ParamStore, PerceptualProxy};
use crate::rng::{self, Rng};

/// Spatial reduction of the codec.
pub const DOWN: usize = 4;
pub const VIEWS: usize = 3;
pub const CHECKPOINT_KIND: &str = "refiner";

fn groups(c: usize) -> usize {
    [8, 4, 2, 1].into_iter().find(|g| c % g == 0).unwrap_or(1)
}

/// `(N, 3, H, W)` with H, W multiples of `DOWN` to `(N, 3·DOWN², H/DOWN, W/DOWN)`.
fn unshuffle(x: &Tensor) -> Result<Tensor> {
    let (n, c, h, w) = x.dims4()?;
    let (hh, ww) = (h / DOWN, w / DOWN);
    Ok(x.reshape(vec![n, c, hh, DOWN, ww, DOWN])?
        .permute(vec![0, 1, 3, 5, 2, 4])?
        .contiguous()?
        .reshape((n, c * DOWN * DOWN, hh, ww))?)
}

fn shuffle(x: &Tensor) -> Result<Tensor> {
    let (n, cc, h, w) = x.dims4()?;
    let c = cc / (DOWN * DOWN);
    Ok(x.reshape(vec![n, c, DOWN, DOWN, h, w])?
        .permute(vec![0, 1, 4, 2, 5, 3])?
        .contiguous()?
        .reshape((n, c, h * DOWN, w * DOWN))?)
}

fn pad_to_multiple(x: &Tensor, m: usize) -> Result<Tensor> {
    let (_, _, h, w) = x.dims4()?;
    let x = x.pad_with_zeros(2, 0, (m - h % m) % m)?;
    Ok(x.pad_with_zeros(3, 0, (m - w % m) % m)?)
}

/// Pixel-unshuffle followed by convolutions at latent resolution.
#[derive(Debug, Clone)]
struct Encoder {
    convs: Vec<Conv2d>,
}

impl Encoder {
    fn new(ps: &mut ParamStore, name: &str, width: usize, channels: usize, rng: &mut Rng) -> Result<Self> {
        let cin = 3 * DOWN * DOWN;
        Ok(Self {
            convs: vec![
                conv2d(ps, &format!("{name}.0"), ConvSpec::k3(cin, width), rng)?,
                conv2d(ps, &format!("{name}.1"), ConvSpec::k3(width, width), rng)?,
                conv2d(ps, &format!("{name}.2"), ConvSpec::k1(width, channels), rng)?,
            ],
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = unshuffle(&pad_to_multiple(&((x * 2.0)? - 1.0)?, DOWN)?)?;
        for (i, c) in self.convs.iter().enumerate() {
            h = c.forward(&h)?;
            if i + 1 < self.convs.len() {
                h = candle_nn::ops::silu(&h)?;
            }
        }
        Ok(h)
    }
}

#[derive(Debug, Clone)]
struct Decoder {
    convs: Vec<Conv2d>,
}

impl Decoder {
    fn new(ps: &mut ParamStore, name: &str, width: usize, channels: usize, rng: &mut Rng) -> Result<Self> {
        Ok(Self {
            convs: vec![
                conv2d(ps, &format!("{name}.0"), ConvSpec::k3(channels, width), rng)?,
                conv2d(ps, &format!("{name}.1"), ConvSpec::k3(width, width), rng)?,
                conv2d(ps, &format!("{name}.2"), ConvSpec::k1(width, 3 * DOWN * DOWN), rng)?,
            ],
        })
    }

    /// Decodes to `(N, 3, height, width)` without clamping.
    fn forward_raw(&self, z: &Tensor, height: usize, width: usize) -> Result<Tensor> {
        let mut h = z.clone();
        for (i, c) in self.convs.iter().enumerate() {
            h = c.forward(&h)?;
            if i + 1 < self.convs.len() {
                h = candle_nn::ops::silu(&h)?;
            }
        }
        let img = ((shuffle(&h)? + 1.0)? * 0.5)?;
        Ok(img.narrow(2, 0, height)?.narrow(3, 0, width)?)
    }

    /// Decodes to `(N, 3, height, width)` in [0, 1].
    fn forward(&self, z: &Tensor, height: usize, width: usize) -> Result<Tensor> {
        Ok(self.forward_raw(z, height, width)?.clamp(0.0, 1.0)?)
    }
}

#[derive(Debug, Clone)]
struct ResBlock {
    norm1: GroupNorm,
    conv1: Conv2d,
    time: Linear,
    norm2: GroupNorm,
    conv2: Conv2d,
    skip: Option<Conv2d>,
}

impl ResBlock {
    fn new(ps: &mut ParamStore, name: &str, cin: usize, cout: usize, tdim: usize, rng: &mut Rng) -> Result<Self> {
        Ok(Self {
            norm1: group_norm(ps, &format!("{name}.norm1"), cin, groups(cin), rng)?,
            conv1: conv2d(ps, &format!("{name}.conv1"), ConvSpec::k3(cin, cout), rng)?,
            time: linear(ps, &format!("{name}.time"), tdim, cout, rng)?,
            norm2: group_norm(ps, &format!("{name}.norm2"), cout, groups(cout), rng)?,
            conv2: conv2d(ps, &format!("{name}.conv2"), ConvSpec::k3(cout, cout), rng)?,
            skip: if cin != cout {
                Some(conv2d(ps, &format!("{name}.skip"), ConvSpec::k1(cin, cout), rng)?)
            } else {
                None
            },
        })
    }

    fn forward(&self, x: &Tensor, temb: &Tensor) -> Result<Tensor> {
        let h = self.conv1.forward(&candle_nn::ops::silu(&self.norm1.forward(x)?)?)?;
        let t = self.time.forward(temb)?.unsqueeze(2)?.unsqueeze(3)?;
        let h = h.broadcast_add(&t)?;
        let h = self.conv2.forward(&candle_nn::ops::silu(&self.norm2.forward(&h)?)?)?;
        let s = match &self.skip {
            Some(c) => c.forward(x)?,
            None => x.clone(),
        };
        Ok((s + h)?)
    }
}

/// Self-attention whose tokens are every spatial position of all three
/// views. Feature maps arrive view-major as `(B·3, C, h, w)`.
#[derive(Debug, Clone)]
struct JointAttention {
    norm: GroupNorm,
    view_embed: Tensor,
    qkv: Linear,
    proj: Linear,
    heads: usize,
}

impl JointAttention {
    fn new(ps: &mut ParamStore, name: &str, c: usize, heads: usize, rng: &mut Rng) -> Result<Self> {
        Ok(Self {
            norm: group_norm(ps, &format!("{name}.norm"), c, groups(c), rng)?,
            view_embed: ps.param(&format!("{name}.view"), &[VIEWS, c], Init::Uniform(0.5), rng)?,
            qkv: linear(ps, &format!("{name}.qkv"), c, 3 * c, rng)?,
            proj: linear_zero(ps, &format!("{name}.proj"), c, c, rng)?,
            heads,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (bv, c, h, w) = x.dims4()?;
        let b = bv / VIEWS;
        let hw = h * w;
        let tokens = self
            .norm
            .forward(x)?
            .reshape((b, VIEWS, c, hw))?
            .transpose(2, 3)?
            .broadcast_add(&self.view_embed.reshape((1, VIEWS, 1, c))?)?
            .reshape((b, VIEWS * hw, c))?;
        let l = VIEWS * hw;
        let d = c / self.heads;
        let qkv = self.qkv.forward(&tokens)?.reshape((b, l, 3, self.heads, d))?;
        let part = |i: usize| -> Result<Tensor> { Ok(qkv.narrow(2, i, 1)?.squeeze(2)?.transpose(1, 2)?.contiguous()?) };
        let (q, k, v) = (part(0)?, part(1)?, part(2)?);
        let att = nn::softmax_last(&(q.matmul(&k.transpose(2, 3)?.contiguous()?)? / (d as f64).sqrt())?)?;
        let out = att.matmul(&v)?.transpose(1, 2)?.reshape((b, l, c))?;
        let out = self
            .proj
            .forward(&out)?
            .reshape((b, VIEWS, hw, c))?
            .transpose(2, 3)?
            .reshape((bv, c, h, w))?;
        Ok((x + out)?)
    }
}

fn sinusoidal(t: f64, dim: usize) -> Vec<f32> {
    let half = dim / 2;
    let mut out = vec![0f32; dim];
    for i in 0..half {
        let f = (-(10000f64.ln()) * i as f64 / half as f64).exp();
        out[i] = (t * f).sin() as f32;
        out[half + i] = (t * f).cos() as f32;
    }
    out
}

#[derive(Debug, Clone)]
struct Level {
    down: ResBlock,
    up: ResBlock,
    attn_down: Option<JointAttention>,
    attn_up: Option<JointAttention>,
    /// Stride-2 conv into the next level.
    to_next: Option<Conv2d>,
    /// Conv after upsampling from the next level.
    from_next: Option<Conv2d>,
}

#[derive(Debug, Clone)]
struct UNet {
    time_mlp: Mlp,
    time_input: Tensor,
    conv_in: Conv2d,
    levels: Vec<Level>,
    norm_out: GroupNorm,
    conv_out: Conv2d,
}

impl UNet {
    fn new(ps: &mut ParamStore, cfg: &RefinerConfig, rng: &mut Rng) -> Result<Self> {
        let w = &cfg.widths;
        let tdim = w[0];
        let time_mlp = Mlp::new(ps, "unet.time", &[tdim, 2 * tdim, tdim], 1.0, rng)?;
        let time_input = Tensor::from_vec(sinusoidal(cfg.tau as f64, tdim), (1, tdim), &Device::Cpu)?;
        let conv_in = conv2d(ps, "unet.in", ConvSpec::k3(cfg.channels, w[0]), rng)?;
        let n = w.len();
        let mut levels = Vec::with_capacity(n);
        for i in 0..n {
            let attn = cfg.attention && i + cfg.attention_levels >= n;
            let ln = format!("unet.l{i}");
            levels.push(Level {
                down: ResBlock::new(ps, &format!("{ln}.down"), w[i], w[i], tdim, rng)?,
                up: ResBlock::new(ps, &format!("{ln}.up"), 2 * w[i], w[i], tdim, rng)?,
                attn_down: if attn {
                    Some(JointAttention::new(ps, &format!("{ln}.attn_down"), w[i], cfg.heads, rng)?)
                } else {
                    None
                },
                attn_up: if attn {
                    Some(JointAttention::new(ps, &format!("{ln}.attn_up"), w[i], cfg.heads, rng)?)
                } else {
                    None
                },
                to_next: if i + 1 < n {
                    Some(conv2d(ps, &format!("{ln}.to_next"), ConvSpec::strided(w[i], w[i + 1], 3, 2, 1), rng)?)
                } else {
                    None
                },
                from_next: if i + 1 < n {
                    Some(conv2d(ps, &format!("{ln}.from_next"), ConvSpec::k3(w[i + 1], w[i]), rng)?)
                } else {
                    None
                },
            });
        }
        Ok(Self {
            time_mlp,
            time_input,
            conv_in,
            levels,
            norm_out: group_norm(ps, "unet.norm_out", w[0], groups(w[0]), rng)?,
            // Zero output conv: the untrained U-Net is the identity.
            conv_out: conv2d_zero(ps, "unet.out", ConvSpec::k3(w[0], cfg.channels), rng)?,
        })
    }

    /// `z`: `(B·3, c, h, w)` view-major. With `attention` false every
    /// attention layer is skipped, which decouples the views.
    fn forward(&self, z: &Tensor, attention: bool) -> Result<Tensor> {
        let n = z.dim(0)?;
        let temb = self
            .time_mlp
            .forward(&self.time_input.to_dtype(z.dtype())?)?
            .broadcast_as((n, self.time_input.dim(1)?))?
            .contiguous()?;
        let mut h = self.conv_in.forward(z)?;
        let mut skips = Vec::with_capacity(self.levels.len());
        for lvl in &self.levels {
            h = lvl.down.forward(&h, &temb)?;
            if let (Some(a), true) = (&lvl.attn_down, attention) {
                h = a.forward(&h)?;
            }
            skips.push(h.clone());
            if let Some(c) = &lvl.to_next {
                h = c.forward(&nn::pad_to_even(&h)?)?;
            }
        }
        for (i, lvl) in self.levels.iter().enumerate().rev() {
            let skip = &skips[i];
            if let Some(c) = &lvl.from_next {
                let (_, _, sh, sw) = skip.dims4()?;
                let (_, _, hh, hw) = h.dims4()?;
                h = h.upsample_nearest2d(2 * hh, 2 * hw)?.narrow(2, 0, sh)?.narrow(3, 0, sw)?;
                h = c.forward(&h)?;
            }
            h = lvl.up.forward(&Tensor::cat(&[&h, skip], 1)?, &temb)?;
            if let (Some(a), true) = (&lvl.attn_up, attention) {
                h = a.forward(&h)?;
            }
        }
        let out = self.conv_out.forward(&candle_nn::ops::silu(&self.norm_out.forward(&h)?)?)?;
        Ok((z + out)?)
    }
}

/// Latents of the three views stacked as `(B, 3, c, h, w)` in the fixed
/// order (coarse, texture, geometry), plus the image size they decode to.
#[derive(Debug, Clone)]
pub struct LatentStack {
    pub latents: Tensor,
    pub height: usize,
    pub width: usize,
}

impl LatentStack {
    pub fn view(&self, v: usize) -> Result<Tensor> {
        Ok(self.latents.narrow(1, v, 1)?.squeeze(1)?)
    }
}

/// Refined outputs `(coarse, texture, geometry)`, each `(B, 3, H, W)`.
pub type Decoded = [Tensor; 3];

#[derive(Debug, Clone)]
pub struct Refiner {
    ps: ParamStore,
    cfg: RefinerConfig,
    tex_enc: Encoder,
    tex_dec: Decoder,
    geo_enc: Encoder,
    geo_dec: Decoder,
    unet: UNet,
    steps_trained: usize,
}

impl Refiner {
    pub fn new(cfg: &RefinerConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = rng::stream(seed, "refiner-init");
        let mut ps = ParamStore::new(DType::F32);
        let (cw, c) = (cfg.codec_width, cfg.channels);
        Ok(Self {
            tex_enc: Encoder::new(&mut ps, "codec.tex_enc", cw, c, &mut rng)?,
            tex_dec: Decoder::new(&mut ps, "codec.tex_dec", cw, c, &mut rng)?,
            geo_enc: Encoder::new(&mut ps, "codec.geo_enc", cw, c, &mut rng)?,
            geo_dec: Decoder::new(&mut ps, "codec.geo_dec", cw, c, &mut rng)?,
            unet: UNet::new(&mut ps, cfg, &mut rng)?,
            cfg: cfg.clone(),
            ps,
            steps_trained: 0,
        })
    }

    pub fn config(&self) -> &RefinerConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore {
        &self.ps
    }

    pub fn fingerprint(&self) -> Result<String> {
        self.ps.fingerprint()
    }

    pub fn steps_trained(&self) -> usize {
        self.steps_trained
    }

    /// Toggles the condition views at inference; disabled views are zeroed
    /// in latent space.
    pub fn set_conditions(&mut self, texture: bool, geometry: bool) {
        self.cfg.use_texture = texture;
        self.cfg.use_geometry = geometry;
    }

    /// Encodes `(B, 3, H, W)` batches. Coarse and texture share the texture
    /// encoder; the stack is not yet condition-masked.
    pub fn encode(&self, coarse: &Tensor, texture: &Tensor, geometry: &Tensor) -> Result<LatentStack> {
        if coarse.dims() != texture.dims() || coarse.dims() != geometry.dims() {
            return Err(Error::param(format!(
                "refiner inputs differ in shape: {:?}, {:?}, {:?}",
                coarse.dims(),
                texture.dims(),
                geometry.dims()
            )));
        }
        let (b, c, h, w) = coarse.dims4()?;
        if c != 3 {
            return Err(Error::param("refiner inputs must be RGB"));
        }
        let tex = self.tex_enc.forward(&Tensor::cat(&[coarse, texture], 0)?)?;
        let geo = self.geo_enc.forward(geometry)?;
        let zc = tex.narrow(0, 0, b)?;
        let zt = tex.narrow(0, b, b)?;
        Ok(LatentStack {
            latents: Tensor::stack(&[&zc, &zt, &geo], 1)?,
            height: h,
            width: w,
        })
    }

    /// Zeroes the condition views disabled in the config.
    pub fn mask_conditions(&self, stack: &LatentStack) -> Result<LatentStack> {
        if self.cfg.use_texture && self.cfg.use_geometry {
            return Ok(stack.clone());
        }
        let keep = [1.0f32, self.cfg.use_texture as u8 as f32, self.cfg.use_geometry as u8 as f32];
        let m = Tensor::from_vec(keep.to_vec(), (1, VIEWS, 1, 1, 1), &Device::Cpu)?.to_dtype(stack.latents.dtype())?;
        Ok(LatentStack {
            latents: stack.latents.broadcast_mul(&m)?,
            ..*stack
        })
    }

    pub fn denoise(&self, stack: &LatentStack) -> Result<LatentStack> {
        self.denoise_with(stack, true)
    }

    /// Denoising pass; `attention = false` skips every attention layer.
    pub fn denoise_with(&self, stack: &LatentStack, attention: bool) -> Result<LatentStack> {
        let (b, v, c, h, w) = stack.latents.dims5()?;
        let flat = stack.latents.reshape((b * v, c, h, w))?;
        let out = self.unet.forward(&flat, attention)?;
        Ok(LatentStack {
            latents: out.reshape((b, v, c, h, w))?,
            ..*stack
        })
    }

    pub fn decode(&self, stack: &LatentStack) -> Result<Decoded> {
        let b = stack.latents.dim(0)?;
        let (h, w) = (stack.height, stack.width);
        let tex = Tensor::cat(&[&stack.view(0)?, &stack.view(1)?], 0)?;
        let imgs = self.tex_dec.forward(&tex, h, w)?;
        Ok([
            imgs.narrow(0, 0, b)?,
            imgs.narrow(0, b, b)?,
            self.geo_dec.forward(&stack.view(2)?, h, w)?,
        ])
    }

    /// Residual decoding: each view's input plus the decoded change the
    /// U-Net made to its latent, clamped to [0, 1]. An identity U-Net
    /// therefore returns the inputs exactly, whatever the codec's error.
    pub fn decode_residual(&self, refined: &LatentStack, base: &LatentStack, inputs: [&Tensor; 3]) -> Result<Decoded> {
        let b = refined.latents.dim(0)?;
        let (h, w) = (refined.height, refined.width);
        let raw = |s: &LatentStack| -> Result<[Tensor; 3]> {
            let tex = Tensor::cat(&[&s.view(0)?, &s.view(1)?], 0)?;
            let imgs = self.tex_dec.forward_raw(&tex, h, w)?;
            Ok([imgs.narrow(0, 0, b)?, imgs.narrow(0, b, b)?, self.geo_dec.forward_raw(&s.view(2)?, h, w)?])
        };
        let (after, before) = (raw(refined)?, raw(base)?);
        let out = |v: usize| -> Result<Tensor> { Ok(((inputs[v] + &after[v])? - &before[v])?.clamp(0.0, 1.0)?) };
        Ok([out(0)?, out(1)?, out(2)?])
    }

    /// encode → condition mask → denoise → residual decode.
    pub fn forward(&self, coarse: &Tensor, texture: &Tensor, geometry: &Tensor) -> Result<Decoded> {
        let s = self.mask_conditions(&self.encode(coarse, texture, geometry)?)?;
        self.decode_residual(&self.denoise(&s)?, &s, [coarse, texture, geometry])
    }

    /// Codec round trip without the U-Net.
    pub fn reconstruct(&self, coarse: &Tensor, texture: &Tensor, geometry: &Tensor) -> Result<Decoded> {
        self.decode(&self.encode(coarse, texture, geometry)?)
    }

    /// Refines one set of already-cropped images.
    pub fn refine_crops(&self, coarse: &Image, texture: &Image, geometry: &Image) -> Result<Image> {
        let t = |i: &Image| -> Result<Tensor> { Ok(i.to_tensor(&Device::Cpu)?.unsqueeze(0)?) };
        let out = self.forward(&t(coarse)?, &t(texture)?, &t(geometry)?)?;
        Image::from_tensor(&out[0].detach())
    }

    pub fn to_checkpoint(&self, config_hash: &str, seed: u64) -> Result<Checkpoint> {
        Ok(Checkpoint {
            meta: CheckpointMeta {
                kind: CHECKPOINT_KIND.into(),
                config_hash: config_hash.into(),
                seed,
                extra: json!({ "config": self.cfg, "steps_trained": self.steps_trained }),
            },
            arrays: self.ps.export()?,
        })
    }

    /// Rebuilds the architecture recorded in the checkpoint and loads it.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.meta.kind != CHECKPOINT_KIND {
            return Err(Error::Format(format!("expected a refiner checkpoint, got {}", ck.meta.kind)));
        }
        let cfg: RefinerConfig = serde_json::from_value(ck.meta.extra["config"].clone())?;
        let mut r = Self::new(&cfg, 0)?;
        r.ps.import(&ck.arrays)?;
        r.steps_trained = ck.meta.extra["steps_trained"].as_u64().unwrap_or(0) as usize;
        Ok(r)
    }
}

/// Sum of the reconstruction loss over the active (output, target) pairs.
pub fn refiner_loss(
    outputs: &Decoded,
    targets: &Decoded,
    active: [bool; 3],
    weights: LossWeights,
    proxy: &PerceptualProxy,
) -> Result<Tensor> {
    let mut total: Option<Tensor> = None;
    for v in 0..VIEWS {
        if !active[v] {
            continue;
        }
        let l = nn::reconstruction_loss(&outputs[v], &targets[v], weights, proxy)?;
        total = Some(match total {
            None => l,
            Some(t) => (t + l)?,
        });
    }
    total.ok_or_else(|| Error::param("refiner loss needs at least one active view"))
}

/// Loss traces from [`train_refiner`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RefinerReport {
    pub codec: Vec<f64>,
    pub joint: Vec<f64>,
}

struct Batch {
    coarse: Tensor,
    texture: Tensor,
    geometry: Tensor,
    target: Tensor,
}

fn batch(samples: &[RefinerSample], idx: &[usize]) -> Result<Batch> {
    let stack = |f: &dyn Fn(&RefinerSample) -> &Image| -> Result<Tensor> {
        let ts = idx
            .iter()
            .map(|&i| f(&samples[i]).to_tensor(&Device::Cpu))
            .collect::<Result<Vec<_>>>()?;
        Ok(Tensor::stack(&ts, 0)?)
    };
    Ok(Batch {
        coarse: stack(&|s| &s.coarse)?,
        texture: stack(&|s| &s.texture)?,
        geometry: stack(&|s| &s.geometry)?,
        target: stack(&|s| &s.target)?,
    })
}

fn adamw(vars: Vec<candle_core::Var>, lr: f64) -> Result<AdamW> {
    Ok(AdamW::new(
        vars,
        ParamsAdamW {
            lr,
            weight_decay: 0.0,
            ..Default::default()
        },
    )?)
}

/// Codec warm start (plain autoencoding, L1) followed by joint training of
/// codec and U-Net on the refiner loss.
pub fn train_refiner(refiner: &mut Refiner, samples: &[RefinerSample], seed: u64) -> Result<RefinerReport> {
    let cfg = refiner.cfg.clone();
    if samples.is_empty() {
        return Err(Error::param("refiner training needs at least one sample"));
    }
    let dims = (samples[0].target.height, samples[0].target.width);
    if samples.iter().any(|s| (s.target.height, s.target.width) != dims) {
        return Err(Error::param("refiner samples differ in crop size"));
    }
    let mut rng = rng::stream(seed, "refiner-train");
    let bs = cfg.batch_size.min(samples.len());
    let draw = |rng: &mut Rng| -> Vec<usize> { (0..bs).map(|_| rng.random_range(0..samples.len())).collect() };
    let mut report = RefinerReport::default();

    let mut opt = adamw(refiner.ps.vars_with_prefix("codec."), cfg.learning_rate)?;
    for _ in 0..cfg.codec_steps {
        let b = batch(samples, &draw(&mut rng))?;
        let texture_in = Tensor::cat(&[&b.coarse, &b.texture], 0)?;
        let zeros = b.geometry.zeros_like()?;
        let out = refiner.reconstruct(&texture_in, &texture_in, &Tensor::cat(&[&b.geometry, &zeros], 0)?)?;
        let loss = (nn::l1(&out[0], &texture_in)? + nn::l1(&out[2].narrow(0, 0, bs)?, &b.geometry)?)?;
        let v = nn::scalar(&loss)?;
        nn::check_finite(v, "refiner codec loss")?;
        opt.backward_step(&loss)?;
        report.codec.push(v);
    }

    let proxy = PerceptualProxy::new(DType::F32)?;
    let active = [true, cfg.use_texture, cfg.use_geometry];
    let mut opt = adamw(refiner.ps.vars(), cfg.learning_rate)?;
    for _ in 0..cfg.steps {
        let b = batch(samples, &draw(&mut rng))?;
        let out = refiner.forward(&b.coarse, &b.texture, &b.geometry)?;
        let targets = [b.target, b.texture, b.geometry];
        let loss = refiner_loss(&out, &targets, active, cfg.loss_weights(), &proxy)?;
        let v = nn::scalar(&loss)?;
        nn::check_finite(v, "refiner loss")?;
        opt.backward_step(&loss)?;
        report.joint.push(v);
    }
    refiner.steps_trained += cfg.codec_steps + cfg.steps;
    Ok(report)
}

/// Refines a generated coarse frame. All three inputs are cropped with the
/// coarse mask's geometry. The refiner's change to the crop is resized back
/// to the crop rectangle and added to the full-resolution coarse frame, so
/// the crop resampling itself never blurs the result.
pub fn refine(refiner: &Refiner, coarse: &CoarseSample, source: &Image, normal_map: &Image, crop: &CropSpec) -> Result<Image> {
    let (h, w) = (coarse.image.height, coarse.image.width);
    if (source.height, source.width) != (h, w) || (normal_map.height, normal_map.width) != (h, w) {
        return Err(Error::param("refine inputs must share the coarse frame's size"));
    }
    let rect = crop_rect(&coarse.mask, crop.extension)?;
    let cut = |img: &Image| img.resample_rect(rect, crop.height, crop.width);
    let small = cut(&coarse.image);
    let refined = refiner.refine_crops(&small, &cut(source), &cut(normal_map))?;
    let delta = Image::from_fn(crop.height, crop.width, |y, x| {
        let (a, b) = (refined.pixel(y, x), small.pixel(y, x));
        [0, 1, 2].map(|k| a[k] - b[k])
    })
    .resize(rect.height, rect.width);
    let mut out = coarse.image.clone();
    for y in 0..rect.height {
        for x in 0..rect.width {
            let (ty, tx) = (rect.top + y, rect.left + x);
            if ty < h && tx < w {
                let (p, d) = (out.pixel(ty, tx), delta.pixel(y, x));
                out.set_pixel(ty, tx, [0, 1, 2].map(|k| (p[k] + d[k]).clamp(0.0, 1.0)));
            }
        }
    }
    Ok(out)
}

/// Mean of per-sample crop PSNRs: (coarse vs target, refined vs target).
pub fn crop_psnr(refiner: &Refiner, samples: &[RefinerSample]) -> Result<(f64, f64)> {
    let mut before = 0.0;
    let mut after = 0.0;
    for s in samples {
        let r = refiner.refine_crops(&s.coarse, &s.texture, &s.geometry)?;
        before += crate::metrics::psnr(&s.coarse, &s.target)?;
        after += crate::metrics::psnr(&r, &s.target)?;
    }
    let n = samples.len().max(1) as f64;
    Ok((before / n, after / n))
}

/// Largest absolute difference between two tensors.
pub fn max_abs_diff(a: &Tensor, b: &Tensor) -> Result<f64> {
    nn::scalar(&(a - b)?.abs()?.flatten_all()?.max(D::Minus1)?)
}
