//! Examiner: a dual-branch similarity gate scoring how well a candidate
//! image matches a reference frame.
//!
//! Both images go through one patch transformer. Each block then runs
//! attention with channels as tokens: the reference attends to itself, and
//! the candidate supplies keys and values for the reference's queries. A
//! shared convolution squeezes the channels after every block. Patch scores
//! and patch weights read the candidate branch.

use candle_core::{DType, Device, Module, Tensor, D};
use candle_nn::{AdamW, Conv2d, LayerNorm, Linear, Optimizer, ParamsAdamW};
use rand::Rng as _;
use serde_json::json;

use crate::checkpoint::{Checkpoint, CheckpointMeta};
use crate::config::{CropSpec, ExaminerConfig};
use crate::dataset::{center_square_crop, crop_and_resize, random_square_crop};
use crate::error::{Error, Result};
use crate::image::{Image, Mask};
use crate::nn::{self, conv2d, linear, ConvSpec, Init, Mlp, ParamStore};
use crate::rng::{self, Rng};

pub const CHECKPOINT_KIND: &str = "examiner";

fn layer_norm(ps: &mut ParamStore, name: &str, dim: usize, rng: &mut Rng) -> Result<LayerNorm> {
    let w = ps.param(&format!("{name}.weight"), &[dim], Init::Ones, rng)?;
    let b = ps.param(&format!("{name}.bias"), &[dim], Init::Zeros, rng)?;
    Ok(LayerNorm::new(w, b, 1e-5))
}

/// `softmax(q·kᵀ/√d)` over `(B, T, d)` tokens.
pub fn attention_weights(q: &Tensor, k: &Tensor) -> Result<Tensor> {
    let d = q.dim(D::Minus1)? as f64;
    nn::softmax_last(&(q.matmul(&k.transpose(1, 2)?.contiguous()?)? / d.sqrt())?)
}

#[derive(Debug, Clone)]
struct EncoderLayer {
    norm1: LayerNorm,
    qkv: Linear,
    proj: Linear,
    norm2: LayerNorm,
    mlp: Mlp,
    heads: usize,
}

impl EncoderLayer {
    fn new(ps: &mut ParamStore, name: &str, dim: usize, heads: usize, rng: &mut Rng) -> Result<Self> {
        Ok(Self {
            norm1: layer_norm(ps, &format!("{name}.norm1"), dim, rng)?,
            qkv: linear(ps, &format!("{name}.qkv"), dim, 3 * dim, rng)?,
            proj: linear(ps, &format!("{name}.proj"), dim, dim, rng)?,
            norm2: layer_norm(ps, &format!("{name}.norm2"), dim, rng)?,
            mlp: Mlp::new(ps, &format!("{name}.mlp"), &[dim, 2 * dim, dim], 1.0, rng)?,
            heads,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (b, t, c) = x.dims3()?;
        let d = c / self.heads;
        let qkv = self.qkv.forward(&self.norm1.forward(x)?)?.reshape((b, t, 3, self.heads, d))?;
        let part = |i: usize| -> Result<Tensor> {
            Ok(qkv
                .narrow(2, i, 1)?
                .squeeze(2)?
                .transpose(1, 2)?
                .contiguous()?
                .reshape((b * self.heads, t, d))?)
        };
        let (q, k, v) = (part(0)?, part(1)?, part(2)?);
        let a = attention_weights(&q, &k)?.matmul(&v)?;
        let a = a.reshape((b, self.heads, t, d))?.transpose(1, 2)?.reshape((b, t, c))?;
        let x = (x + self.proj.forward(&a)?)?;
        Ok((&x + self.mlp.forward(&self.norm2.forward(&x)?)?)?)
    }
}

/// Patchify, linear embedding, positional embedding, transformer layers.
/// Output is `(B, C, HW)`.
#[derive(Debug, Clone)]
struct PatchEmbedder {
    patch: usize,
    embed: Linear,
    pos: Tensor,
    layers: Vec<EncoderLayer>,
    norm: LayerNorm,
}

impl PatchEmbedder {
    fn new(ps: &mut ParamStore, cfg: &ExaminerConfig, side: usize, rng: &mut Rng) -> Result<Self> {
        let n = (side / cfg.patch).pow(2);
        Ok(Self {
            patch: cfg.patch,
            embed: linear(ps, "embed.patch", 3 * cfg.patch * cfg.patch, cfg.dim, rng)?,
            pos: ps.param("embed.pos", &[1, n, cfg.dim], Init::Uniform(0.1), rng)?,
            layers: (0..cfg.layers)
                .map(|i| EncoderLayer::new(ps, &format!("embed.layer{i}"), cfg.dim, cfg.heads, rng))
                .collect::<Result<_>>()?,
            norm: layer_norm(ps, "embed.norm", cfg.dim, rng)?,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (b, c, h, w) = x.dims4()?;
        let p = self.patch;
        let (gh, gw) = (h / p, w / p);
        let patches = ((x * 2.0)? - 1.0)?
            .reshape(vec![b, c, gh, p, gw, p])?
            .permute(vec![0, 2, 4, 1, 3, 5])?
            .contiguous()?
            .reshape((b, gh * gw, c * p * p))?;
        let mut t = self.embed.forward(&patches)?.broadcast_add(&self.pos)?;
        for l in &self.layers {
            t = l.forward(&t)?;
        }
        Ok(self.norm.forward(&t)?.transpose(1, 2)?.contiguous()?)
    }
}

#[derive(Debug, Clone)]
struct Block {
    q: Linear,
    k: Linear,
    v: Linear,
    squeeze: Conv2d,
    channel_tokens: bool,
    grid: usize,
}

/// Attention outputs of one block before the squeeze, exposed for probes.
#[derive(Debug, Clone)]
pub struct BlockAttention {
    pub candidate: Tensor,
    pub reference: Tensor,
    pub weights: Tensor,
}

impl Block {
    fn new(ps: &mut ParamStore, name: &str, cin: usize, cout: usize, grid: usize, channel_tokens: bool, rng: &mut Rng) -> Result<Self> {
        let e = if channel_tokens { grid * grid } else { cin };
        Ok(Self {
            q: linear(ps, &format!("{name}.q"), e, e, rng)?,
            k: linear(ps, &format!("{name}.k"), e, e, rng)?,
            v: linear(ps, &format!("{name}.v"), e, e, rng)?,
            squeeze: conv2d(ps, &format!("{name}.squeeze"), ConvSpec::k3(cin, cout), rng)?,
            channel_tokens,
            grid,
        })
    }

    fn tokens(&self, f: &Tensor) -> Result<Tensor> {
        Ok(if self.channel_tokens { f.clone() } else { f.transpose(1, 2)?.contiguous()? })
    }

    fn untoken(&self, t: &Tensor) -> Result<Tensor> {
        Ok(if self.channel_tokens { t.clone() } else { t.transpose(1, 2)?.contiguous()? })
    }

    fn attend(&self, cand: &Tensor, reference: &Tensor) -> Result<BlockAttention> {
        let (tc, tr) = (self.tokens(cand)?, self.tokens(reference)?);
        let q = self.q.forward(&tr)?;
        let w_ref = attention_weights(&q, &self.k.forward(&tr)?)?;
        let w_cand = attention_weights(&q, &self.k.forward(&tc)?)?;
        Ok(BlockAttention {
            reference: self.untoken(&w_ref.matmul(&self.v.forward(&tr)?)?)?,
            candidate: self.untoken(&w_cand.matmul(&self.v.forward(&tc)?)?)?,
            weights: w_cand,
        })
    }

    fn squeeze(&self, f: &Tensor, a: &Tensor) -> Result<Tensor> {
        let (b, c, hw) = f.dims3()?;
        let x = (f + a)?.reshape((b, c, self.grid, self.grid))?;
        let y = candle_nn::ops::silu(&self.squeeze.forward(&x)?)?;
        Ok(y.reshape((b, (), hw))?)
    }

    fn forward(&self, cand: &Tensor, reference: &Tensor) -> Result<(Tensor, Tensor)> {
        let a = self.attend(cand, reference)?;
        Ok((self.squeeze(cand, &a.candidate)?, self.squeeze(reference, &a.reference)?))
    }
}

/// Scalar score plus the per-patch pieces it aggregates.
#[derive(Debug, Clone)]
pub struct ScoreParts {
    /// `(B,)` in [0, 1].
    pub score: Tensor,
    /// `(B, HW)` patch scores in [0, 1].
    pub patch_scores: Tensor,
    /// `(B, HW)` patch weights summing to one.
    pub patch_weights: Tensor,
}

#[derive(Debug, Clone)]
pub struct Examiner {
    ps: ParamStore,
    cfg: ExaminerConfig,
    side: usize,
    embedder: PatchEmbedder,
    blocks: Vec<Block>,
    score_head: Mlp,
    weight_head: Mlp,
    steps_trained: usize,
}

impl Examiner {
    pub fn new(cfg: &ExaminerConfig, side: usize, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if side == 0 || side % cfg.patch != 0 {
            return Err(Error::Config(format!("examiner side {side} must be a multiple of the patch {}", cfg.patch)));
        }
        let grid = side / cfg.patch;
        let mut rng = rng::stream(seed, "examiner-init");
        let mut ps = ParamStore::new(DType::F32);
        let embedder = PatchEmbedder::new(&mut ps, cfg, side, &mut rng)?;
        let mut cin = cfg.dim;
        let mut blocks = Vec::new();
        for (i, &cout) in cfg.block_channels.iter().enumerate() {
            blocks.push(Block::new(&mut ps, &format!("block{i}"), cin, cout, grid, cfg.channel_tokens, &mut rng)?);
            cin = cout;
        }
        let score_head = Mlp::new(&mut ps, "head.score", &[cin, 32, 1], 1.0, &mut rng)?;
        let weight_head = Mlp::new(&mut ps, "head.weight", &[cin, 32, 1], 1.0, &mut rng)?;
        Ok(Self {
            ps,
            cfg: cfg.clone(),
            side,
            embedder,
            blocks,
            score_head,
            weight_head,
            steps_trained: 0,
        })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn config(&self) -> &ExaminerConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore {
        &self.ps
    }

    pub fn fingerprint(&self) -> Result<String> {
        self.ps.fingerprint()
    }

    pub fn is_trained(&self) -> bool {
        self.steps_trained > 0
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let (_, c, h, w) = x.dims4()?;
        if c != 3 || h != self.side || w != self.side {
            return Err(Error::param(format!(
                "examiner expects (B, 3, {s}, {s}) input, got {:?}",
                x.dims(),
                s = self.side
            )));
        }
        Ok(())
    }

    /// Patch features `(B, C, HW)`.
    pub fn extract_features(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        self.embedder.forward(x)
    }

    /// Attention of block `i` on given features, before the squeeze.
    pub fn block_attention(&self, i: usize, cand: &Tensor, reference: &Tensor) -> Result<BlockAttention> {
        self.blocks[i].attend(cand, reference)
    }

    pub fn block_forward(&self, i: usize, cand: &Tensor, reference: &Tensor) -> Result<(Tensor, Tensor)> {
        self.blocks[i].forward(cand, reference)
    }

    /// Aggregates candidate-branch features `(B, C, HW)`.
    pub fn head(&self, feats: &Tensor) -> Result<ScoreParts> {
        let t = feats.transpose(1, 2)?.contiguous()?;
        let s = candle_nn::ops::sigmoid(&self.score_head.forward(&t)?.squeeze(2)?)?;
        let w = nn::softmax_last(&self.weight_head.forward(&t)?.squeeze(2)?)?;
        let score = (&s * &w)?.sum(1)?;
        Ok(ScoreParts {
            score,
            patch_scores: s,
            patch_weights: w,
        })
    }

    pub fn score_parts(&self, cand: &Tensor, reference: &Tensor) -> Result<ScoreParts> {
        let mut fc = self.extract_features(cand)?;
        let mut fr = self.extract_features(reference)?;
        for b in &self.blocks {
            (fc, fr) = b.forward(&fc, &fr)?;
        }
        self.head(&fc)
    }

    /// Batched scores `(B,)`.
    pub fn score_tensor(&self, cand: &Tensor, reference: &Tensor) -> Result<Tensor> {
        Ok(self.score_parts(cand, reference)?.score)
    }

    /// Score of one `side × side` pair.
    pub fn score(&self, cand: &Image, reference: &Image) -> Result<f64> {
        if !self.is_trained() {
            log::warn!("scoring with an untrained examiner");
        }
        let t = |i: &Image| -> Result<Tensor> { Ok(i.to_tensor(&Device::Cpu)?.unsqueeze(0)?) };
        let s = self.score_tensor(&t(cand)?, &t(reference)?)?;
        Ok(s.to_dtype(DType::F64)?.to_vec1::<f64>()?[0])
    }

    pub fn to_checkpoint(&self, config_hash: &str, seed: u64) -> Result<Checkpoint> {
        Ok(Checkpoint {
            meta: CheckpointMeta {
                kind: CHECKPOINT_KIND.into(),
                config_hash: config_hash.into(),
                seed,
                extra: json!({ "config": self.cfg, "side": self.side, "steps_trained": self.steps_trained }),
            },
            arrays: self.ps.export()?,
        })
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.meta.kind != CHECKPOINT_KIND {
            return Err(Error::Format(format!("expected an examiner checkpoint, got {}", ck.meta.kind)));
        }
        let cfg: ExaminerConfig = serde_json::from_value(ck.meta.extra["config"].clone())?;
        let side = ck.meta.extra["side"]
            .as_u64()
            .ok_or_else(|| Error::Format("examiner checkpoint lacks its input side".into()))? as usize;
        let mut e = Self::new(&cfg, side, 0)?;
        e.ps.import(&ck.arrays)?;
        e.steps_trained = ck.meta.extra["steps_trained"].as_u64().unwrap_or(0) as usize;
        Ok(e)
    }
}

/// Crop-normalizes a frame with its mask and takes the centre square the
/// examiner scores.
pub fn examiner_view(image: &Image, mask: &Mask, crop: &CropSpec) -> Result<Image> {
    let (c, _) = crop_and_resize(image, mask, crop)?;
    center_square_crop(&c, crop.examiner_side)
}

/// Index of the best-scoring candidate; ties go to the lowest index.
pub fn argmax_score(scores: &[f64]) -> Result<usize> {
    if scores.is_empty() {
        return Err(Error::param("no candidates to select from"));
    }
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Selection result: chosen index, its score, all scores.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub index: usize,
    pub score: f64,
    pub scores: Vec<f64>,
}

/// Scores every candidate view against the reference view and keeps the best.
pub fn select_pseudo_gt(examiner: &Examiner, candidates: &[Image], reference: &Image) -> Result<Selection> {
    if candidates.is_empty() {
        return Err(Error::param("no candidates to select from"));
    }
    let scores = candidates
        .iter()
        .map(|c| examiner.score(c, reference))
        .collect::<Result<Vec<_>>>()?;
    let index = argmax_score(&scores)?;
    Ok(Selection {
        index,
        score: scores[index],
        scores,
    })
}

/// Area under the ROC curve of `positives` over `negatives` (ties count half).
pub fn auc(positives: &[f64], negatives: &[f64]) -> Result<f64> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::param("auc needs both classes"));
    }
    let mut wins = 0.0;
    for &p in positives {
        for &n in negatives {
            wins += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    Ok(wins / (positives.len() * negatives.len()) as f64)
}

/// Crop-normalized images of one training example: the real frame, its
/// coarse render and a nearby reference frame.
#[derive(Debug, Clone)]
pub struct ExaminerSample {
    pub real: Image,
    pub coarse: Image,
    pub reference: Image,
}

/// Whether the pair branch shows the real frame (`true`) or the coarse one.
pub fn draw_pair_label(rng: &mut Rng) -> bool {
    rng.random_bool(0.5)
}

/// Binary cross-entropy of scores against targets, mean over the batch.
pub fn bce(scores: &Tensor, targets: &Tensor) -> Result<Tensor> {
    let s = scores.clamp(1e-6, 1.0 - 1e-6)?;
    let pos = (targets * s.log()?)?;
    let neg = ((1.0 - targets)? * (1.0 - &s)?.log()?)?;
    Ok((pos + neg)?.mean_all()?.neg()?)
}

/// Trains on pairs drawn with equal probability from (real, reference) with
/// target 1 and (coarse, reference) with target 0, plus the reference-only
/// term scoring (reference, reference) against 1. Returns the loss trace.
pub fn train_examiner(examiner: &mut Examiner, samples: &[ExaminerSample], seed: u64) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::param("examiner training needs at least one sample"));
    }
    let cfg = examiner.cfg.clone();
    let side = examiner.side;
    let mut rng = rng::stream(seed, "examiner-train");
    let mut opt = AdamW::new(
        examiner.ps.vars(),
        ParamsAdamW {
            lr: cfg.learning_rate,
            weight_decay: 0.0,
            ..Default::default()
        },
    )?;
    let dev = Device::Cpu;
    let mut trace = Vec::with_capacity(cfg.steps);
    for _ in 0..cfg.steps {
        let mut cand = Vec::with_capacity(cfg.batch_size);
        let mut refs = Vec::with_capacity(cfg.batch_size);
        let mut labels = Vec::with_capacity(cfg.batch_size);
        for _ in 0..cfg.batch_size {
            let s = &samples[rng.random_range(0..samples.len())];
            let real = draw_pair_label(&mut rng);
            // One crop position for both images of the pair.
            let (r, top, left) = random_square_crop(&s.reference, side, &mut rng)?;
            let src = if real { &s.real } else { &s.coarse };
            let c = Image::from_fn(side, side, |y, x| src.pixel(top + y, left + x));
            cand.push(c.to_tensor(&dev)?);
            refs.push(r.to_tensor(&dev)?);
            labels.push(if real { 1f32 } else { 0.0 });
        }
        let cand = Tensor::stack(&cand, 0)?;
        let refs = Tensor::stack(&refs, 0)?;
        let y = Tensor::from_vec(labels, cfg.batch_size, &dev)?;
        let pair = bce(&examiner.score_tensor(&cand, &refs)?, &y)?;
        let own = bce(&examiner.score_tensor(&refs, &refs)?, &y.ones_like()?)?;
        let loss = (pair + own)?;
        let v = nn::scalar(&loss)?;
        nn::check_finite(v, "examiner loss")?;
        opt.backward_step(&loss)?;
        trace.push(v);
    }
    examiner.steps_trained += cfg.steps;
    Ok(trace)
}

/// Centre-crop scores of (real, reference) and (coarse, reference) pairs.
pub fn pair_scores(examiner: &Examiner, samples: &[ExaminerSample]) -> Result<(Vec<f64>, Vec<f64>)> {
    let side = examiner.side;
    let mut real = Vec::with_capacity(samples.len());
    let mut coarse = Vec::with_capacity(samples.len());
    for s in samples {
        let r = center_square_crop(&s.reference, side)?;
        real.push(examiner.score(&center_square_crop(&s.real, side)?, &r)?);
        coarse.push(examiner.score(&center_square_crop(&s.coarse, side)?, &r)?);
    }
    Ok((real, coarse))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExaminerConfig {
        ExaminerConfig {
            dim: 16,
            heads: 2,
            block_channels: vec![16, 8],
            steps: 0,
            batch_size: 4,
            ..ExaminerConfig::default()
        }
    }

    fn rand_batch(seed: u64, b: usize, side: usize) -> Tensor {
        let mut r = rng::stream(seed, "ex");
        let v: Vec<f32> = (0..b * 3 * side * side).map(|_| r.random()).collect();
        Tensor::from_vec(v, (b, 3, side, side), &Device::Cpu).unwrap()
    }

    #[test]
    fn feature_grid_matches_patch_arithmetic() {
        let e = Examiner::new(&ExaminerConfig { dim: 16, heads: 2, ..ExaminerConfig::default() }, 56, 1).unwrap();
        let f = e.extract_features(&rand_batch(1, 1, 56)).unwrap();
        assert_eq!(f.dims(), &[1, 16, 196]);
        assert!(e.extract_features(&rand_batch(1, 1, 52)).is_err());
    }

    #[test]
    fn one_pixel_edit_changes_features() {
        let e = Examiner::new(&tiny(), 16, 2).unwrap();
        let a = rand_batch(3, 1, 16);
        let mut v: Vec<f32> = a.flatten_all().unwrap().to_vec1().unwrap();
        v[17] = 1.0 - v[17];
        let b = Tensor::from_vec(v, (1, 3, 16, 16), &Device::Cpu).unwrap();
        let fa = e.extract_features(&a).unwrap();
        let fb = e.extract_features(&b).unwrap();
        assert!(crate::refiner::max_abs_diff(&fa, &fb).unwrap() > 1e-5);
        assert_eq!(crate::refiner::max_abs_diff(&fa, &e.extract_features(&a).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn branches_agree_when_inputs_agree() {
        for channel_tokens in [true, false] {
            let e = Examiner::new(&ExaminerConfig { channel_tokens, ..tiny() }, 16, 4).unwrap();
            let f = e.extract_features(&rand_batch(5, 2, 16)).unwrap();
            let a = e.block_attention(0, &f, &f).unwrap();
            assert_eq!(crate::refiner::max_abs_diff(&a.candidate, &a.reference).unwrap(), 0.0);
            let rows: Vec<f32> = a.weights.sum(D::Minus1).unwrap().flatten_all().unwrap().to_vec1().unwrap();
            assert!(rows.iter().all(|r| (r - 1.0).abs() < 1e-6));
        }
    }

    #[test]
    fn blocks_squeeze_to_configured_channels() {
        let e = Examiner::new(&tiny(), 16, 4).unwrap();
        let f = e.extract_features(&rand_batch(5, 1, 16)).unwrap();
        let (c1, r1) = e.block_forward(0, &f, &f).unwrap();
        assert_eq!(c1.dims(), &[1, 16, 16]);
        assert_eq!(c1.dims(), r1.dims());
        let (c2, _) = e.block_forward(1, &c1, &r1).unwrap();
        assert_eq!(c2.dims(), &[1, 8, 16]);
    }

    #[test]
    fn score_is_weighted_mean_of_patches() {
        let e = Examiner::new(&tiny(), 16, 6).unwrap();
        let p = e.score_parts(&rand_batch(1, 3, 16), &rand_batch(2, 3, 16)).unwrap();
        let s: Vec<f32> = p.score.to_vec1().unwrap();
        let ps: Vec<Vec<f32>> = p.patch_scores.to_vec2().unwrap();
        let pw: Vec<Vec<f32>> = p.patch_weights.to_vec2().unwrap();
        for b in 0..3 {
            assert!((pw[b].iter().sum::<f32>() - 1.0).abs() < 1e-5);
            let manual: f32 = ps[b].iter().zip(&pw[b]).map(|(a, w)| a * w).sum();
            assert!((manual - s[b]).abs() < 1e-6);
            assert!((0.0..=1.0).contains(&s[b]));
        }
        // Uniform weights reduce to the arithmetic mean.
        let mean = p.patch_scores.mean(1).unwrap();
        let uniform = (p.patch_weights.ones_like().unwrap() / 16.0).unwrap();
        let agg = (&p.patch_scores * &uniform).unwrap().sum(1).unwrap();
        assert!(crate::refiner::max_abs_diff(&mean, &agg).unwrap() < 1e-6);
    }

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(argmax_score(&[0.8, 0.3]).unwrap(), 0);
        assert_eq!(argmax_score(&[0.2]).unwrap(), 0);
        assert_eq!(argmax_score(&[0.5, 0.7, 0.7]).unwrap(), 1);
        assert!(argmax_score(&[]).is_err());
    }

    #[test]
    fn auc_edge_cases() {
        assert_eq!(auc(&[0.9, 0.8], &[0.1, 0.2]).unwrap(), 1.0);
        assert_eq!(auc(&[0.1], &[0.9]).unwrap(), 0.0);
        assert_eq!(auc(&[0.5], &[0.5]).unwrap(), 0.5);
    }

    #[test]
    fn pair_labels_are_balanced() {
        let mut r = rng::stream(3, "labels");
        let n = 10_000;
        let hits = (0..n).filter(|_| draw_pair_label(&mut r)).count() as f64;
        // 3σ of Binomial(10⁴, ½) is 150.
        assert!((hits - 5000.0).abs() < 150.0, "{hits}");
    }
}
