//! Small neural-network toolkit over candle: a deterministic parameter
//! store, layer constructors seeded from our own RNG, and shared losses.

use std::collections::BTreeMap;

use candle_core::{DType, Device, Module, Tensor, Var, D};
use candle_nn::{Conv2d, Conv2dConfig, GroupNorm, Linear};
use rand_distr::{Distribution, Uniform};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::metrics::{gaussian_taps, SSIM_C1, SSIM_C2, SSIM_SIGMA, SSIM_WINDOW};
use crate::rng::Rng;

/// Named trainable tensors in a stable (sorted) order.
#[derive(Debug, Clone)]
pub struct ParamStore {
    vars: BTreeMap<String, Var>,
    dtype: DType,
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new(DType::F32)
    }
}

pub enum Init {
    Zeros,
    Ones,
    /// `U(-b, b)`.
    Uniform(f64),
}

impl ParamStore {
    pub fn new(dtype: DType) -> Self {
        Self {
            vars: BTreeMap::new(),
            dtype,
        }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> Device {
        Device::Cpu
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn param(&mut self, name: &str, shape: &[usize], init: Init, rng: &mut Rng) -> Result<Tensor> {
        if self.vars.contains_key(name) {
            return Err(Error::param(format!("duplicate parameter {name}")));
        }
        let n: usize = shape.iter().product();
        let data: Vec<f64> = match init {
            Init::Zeros => vec![0.0; n],
            Init::Ones => vec![1.0; n],
            Init::Uniform(b) => {
                let u = Uniform::new_inclusive(-b, b).map_err(|e| Error::param(e.to_string()))?;
                (0..n).map(|_| u.sample(rng)).collect()
            }
        };
        let t = Tensor::from_vec(data, shape, &Device::Cpu)?.to_dtype(self.dtype)?;
        let var = Var::from_tensor(&t)?;
        let out = var.as_tensor().clone();
        self.vars.insert(name.to_string(), var);
        Ok(out)
    }

    pub fn get(&self, name: &str) -> Option<&Var> {
        self.vars.get(name)
    }

    pub fn vars(&self) -> Vec<Var> {
        self.vars.values().cloned().collect()
    }

    pub fn vars_with_prefix(&self, prefix: &str) -> Vec<Var> {
        self.vars
            .iter()
            .filter(|(k, _)| k.starts_with(prefix))
            .map(|(_, v)| v.clone())
            .collect()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.vars.keys()
    }

    pub fn parameter_count(&self) -> usize {
        self.vars.values().map(|v| v.elem_count()).sum()
    }

    /// `(name, dims, values)` for every parameter, in store order.
    pub fn export(&self) -> Result<Vec<(String, Vec<usize>, Vec<f32>)>> {
        self.vars
            .iter()
            .map(|(k, v)| {
                let vals: Vec<f32> = v.as_tensor().to_dtype(DType::F32)?.flatten_all()?.to_vec1()?;
                Ok((k.clone(), v.dims().to_vec(), vals))
            })
            .collect()
    }

    /// Overwrites parameters from exported arrays. Names and shapes must match exactly.
    pub fn import(&mut self, arrays: &[(String, Vec<usize>, Vec<f32>)]) -> Result<()> {
        if arrays.len() != self.vars.len() {
            return Err(Error::Format(format!(
                "checkpoint holds {} arrays, model expects {}",
                arrays.len(),
                self.vars.len()
            )));
        }
        for (name, dims, vals) in arrays {
            let var = self
                .vars
                .get(name)
                .ok_or_else(|| Error::Format(format!("unexpected parameter {name}")))?;
            if var.dims() != dims.as_slice() {
                return Err(Error::Format(format!(
                    "parameter {name} has shape {dims:?}, model expects {:?}",
                    var.dims()
                )));
            }
            let t = Tensor::from_vec(vals.clone(), dims.as_slice(), &Device::Cpu)?.to_dtype(self.dtype)?;
            var.set(&t)?;
        }
        Ok(())
    }

    /// Copies values from a store with the same layout, at full precision.
    pub fn copy_from(&mut self, other: &ParamStore) -> Result<()> {
        if self.vars.len() != other.vars.len() {
            return Err(Error::param("parameter stores differ in layout"));
        }
        for (name, var) in &self.vars {
            let src = other
                .vars
                .get(name)
                .ok_or_else(|| Error::param(format!("missing parameter {name}")))?;
            var.set(&src.as_tensor().detach().copy()?)?;
        }
        Ok(())
    }

    /// SHA-256 over names, shapes and little-endian values.
    pub fn fingerprint(&self) -> Result<String> {
        let mut h = Sha256::new();
        for (name, dims, vals) in self.export()? {
            h.update(name.as_bytes());
            for d in dims {
                h.update((d as u64).to_le_bytes());
            }
            for v in vals {
                h.update(v.to_le_bytes());
            }
        }
        Ok(hex::encode(h.finalize()))
    }
}

pub fn linear(ps: &mut ParamStore, name: &str, inp: usize, out: usize, rng: &mut Rng) -> Result<Linear> {
    let b = 1.0 / (inp as f64).sqrt();
    let w = ps.param(&format!("{name}.weight"), &[out, inp], Init::Uniform(b), rng)?;
    let bias = ps.param(&format!("{name}.bias"), &[out], Init::Uniform(b), rng)?;
    Ok(Linear::new(w, Some(bias)))
}

pub fn linear_zero(ps: &mut ParamStore, name: &str, inp: usize, out: usize, rng: &mut Rng) -> Result<Linear> {
    let w = ps.param(&format!("{name}.weight"), &[out, inp], Init::Zeros, rng)?;
    let bias = ps.param(&format!("{name}.bias"), &[out], Init::Zeros, rng)?;
    Ok(Linear::new(w, Some(bias)))
}

#[derive(Debug, Clone, Copy)]
pub struct ConvSpec {
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvSpec {
    /// Same-size 3×3 convolution.
    pub fn k3(cin: usize, cout: usize) -> Self {
        Self {
            cin,
            cout,
            kernel: 3,
            stride: 1,
            padding: 1,
        }
    }

    pub fn k1(cin: usize, cout: usize) -> Self {
        Self {
            cin,
            cout,
            kernel: 1,
            stride: 1,
            padding: 0,
        }
    }

    pub fn strided(cin: usize, cout: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        Self {
            cin,
            cout,
            kernel,
            stride,
            padding,
        }
    }

    fn config(&self) -> Conv2dConfig {
        Conv2dConfig {
            padding: self.padding,
            stride: self.stride,
            ..Default::default()
        }
    }
}

pub fn conv2d(ps: &mut ParamStore, name: &str, spec: ConvSpec, rng: &mut Rng) -> Result<Conv2d> {
    let fan_in = spec.cin * spec.kernel * spec.kernel;
    let b = 1.0 / (fan_in as f64).sqrt();
    let shape = [spec.cout, spec.cin, spec.kernel, spec.kernel];
    let w = ps.param(&format!("{name}.weight"), &shape, Init::Uniform(b), rng)?;
    let bias = ps.param(&format!("{name}.bias"), &[spec.cout], Init::Uniform(b), rng)?;
    Ok(Conv2d::new(w, Some(bias), spec.config()))
}

pub fn conv2d_zero(ps: &mut ParamStore, name: &str, spec: ConvSpec, rng: &mut Rng) -> Result<Conv2d> {
    let shape = [spec.cout, spec.cin, spec.kernel, spec.kernel];
    let w = ps.param(&format!("{name}.weight"), &shape, Init::Zeros, rng)?;
    let bias = ps.param(&format!("{name}.bias"), &[spec.cout], Init::Zeros, rng)?;
    Ok(Conv2d::new(w, Some(bias), spec.config()))
}

pub fn group_norm(ps: &mut ParamStore, name: &str, channels: usize, groups: usize, rng: &mut Rng) -> Result<GroupNorm> {
    let w = ps.param(&format!("{name}.weight"), &[channels], Init::Ones, rng)?;
    let b = ps.param(&format!("{name}.bias"), &[channels], Init::Zeros, rng)?;
    Ok(GroupNorm::new(w, b, channels, groups, 1e-5)?)
}

/// Stack of linear layers with SiLU between them (none after the last).
#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<Linear>,
}

impl Mlp {
    /// `dims = [in, hidden.., out]`. The output layer's init range is scaled
    /// by `last_scale`; zero gives an all-zero output layer.
    pub fn new(ps: &mut ParamStore, name: &str, dims: &[usize], last_scale: f64, rng: &mut Rng) -> Result<Self> {
        let mut layers = Vec::new();
        for i in 0..dims.len() - 1 {
            let lname = format!("{name}.{i}");
            let (inp, out) = (dims[i], dims[i + 1]);
            let last = i + 2 == dims.len();
            layers.push(if !last {
                linear(ps, &lname, inp, out, rng)?
            } else if last_scale == 0.0 {
                linear_zero(ps, &lname, inp, out, rng)?
            } else {
                let b = last_scale / (inp as f64).sqrt();
                let w = ps.param(&format!("{lname}.weight"), &[out, inp], Init::Uniform(b), rng)?;
                let bias = ps.param(&format!("{lname}.bias"), &[out], Init::Zeros, rng)?;
                Linear::new(w, Some(bias))
            });
        }
        Ok(Self { layers })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for (i, l) in self.layers.iter().enumerate() {
            h = l.forward(&h)?;
            if i + 1 < self.layers.len() {
                h = candle_nn::ops::silu(&h)?;
            }
        }
        Ok(h)
    }
}

/// Mean absolute difference.
/// Mean absolute difference. candle's `abs` backward treats 0 as positive,
/// which would push exactly matched pixels; `d · sign(d)` has the same value
/// and a zero subgradient there.
pub fn l1(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let d = (a - b)?;
    let s = d.sign()?.detach();
    Ok((d * s)?.mean_all()?)
}

fn as_batch(x: &Tensor) -> Result<Tensor> {
    Ok(match x.rank() {
        3 => x.unsqueeze(0)?,
        4 => x.clone(),
        r => return Err(Error::param(format!("expected a (C,H,W) or (B,C,H,W) image, got rank {r}"))),
    })
}

/// Differentiable mean SSIM of `(C,H,W)` or `(B,C,H,W)` images. The Gaussian
/// window shrinks to the largest odd size that fits images under 11 px.
pub fn ssim_tensor(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.dims() != b.dims() {
        return Err(Error::param(format!("ssim shape mismatch {:?} vs {:?}", a.dims(), b.dims())));
    }
    let a = as_batch(a)?;
    let b = as_batch(b)?;
    let (n, c, h, w) = a.dims4()?;
    let mut size = SSIM_WINDOW.min(h).min(w);
    if size % 2 == 0 {
        size -= 1;
    }
    let taps = gaussian_taps(size, SSIM_SIGMA);
    let dev = a.device();
    let kx = Tensor::from_vec(taps.clone(), (1, 1, 1, size), dev)?.to_dtype(a.dtype())?;
    let ky = Tensor::from_vec(taps, (1, 1, size, 1), dev)?.to_dtype(a.dtype())?;
    let flat = |t: &Tensor| t.reshape((n * c, 1, h, w));
    let filt = |t: &Tensor| -> Result<Tensor> { Ok(t.conv2d(&kx, 0, 1, 1, 1)?.conv2d(&ky, 0, 1, 1, 1)?) };
    let (a, b) = (flat(&a)?, flat(&b)?);
    // One filtering pass over the five stacked moment maps.
    let stacked = Tensor::cat(&[&a, &b, &(&a * &a)?, &(&b * &b)?, &(&a * &b)?], 0)?;
    let f = filt(&stacked)?;
    let m = n * c;
    let mu_a = f.narrow(0, 0, m)?;
    let mu_b = f.narrow(0, m, m)?;
    let saa = f.narrow(0, 2 * m, m)?;
    let sbb = f.narrow(0, 3 * m, m)?;
    let sab = f.narrow(0, 4 * m, m)?;
    let mu_ab = (&mu_a * &mu_b)?;
    let mu_a2 = mu_a.sqr()?;
    let mu_b2 = mu_b.sqr()?;
    let num = ((&mu_ab * 2.0)? + SSIM_C1)?.mul(&(((sab - &mu_ab)? * 2.0)? + SSIM_C2)?)?;
    let den = ((&mu_a2 + &mu_b2)? + SSIM_C1)?.mul(&((((saa - &mu_a2)? + (sbb - &mu_b2)?)?) + SSIM_C2)?)?;
    Ok((num / den)?.mean_all()?)
}

/// Fixed random convolutional feature stack standing in for a learned
/// perceptual metric. Weights come from a constant seed and never train.
#[derive(Debug, Clone)]
pub struct PerceptualProxy {
    convs: Vec<Conv2d>,
}

pub const PERCEPTUAL_SEED: u64 = 0x7e4c_e9a1_5eed_0001;

impl PerceptualProxy {
    pub fn new(dtype: DType) -> Result<Self> {
        let mut rng = crate::rng::stream(PERCEPTUAL_SEED, "perceptual-proxy");
        let mut ps = ParamStore::new(dtype);
        let specs = [
            ConvSpec::k3(3, 8),
            ConvSpec::strided(8, 16, 3, 2, 1),
            ConvSpec::strided(16, 32, 3, 2, 1),
        ];
        let convs = specs
            .iter()
            .enumerate()
            .map(|(i, s)| conv2d(&mut ps, &format!("p{i}"), *s, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        // Detach: the proxy's weights are constants.
        let convs = convs
            .into_iter()
            .map(|c| {
                let w = c.weight().detach();
                let b = c.bias().map(|b| b.detach());
                Conv2d::new(w, b, *c.config())
            })
            .collect();
        Ok(Self { convs })
    }

    fn features(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        let mut h = ((as_batch(x)? * 2.0)? - 1.0)?;
        let mut out = Vec::new();
        for c in &self.convs {
            if c.config().stride > 1 {
                h = pad_to_even(&h)?;
            }
            h = c.forward(&h)?.relu()?;
            let norm = (h.sqr()?.sum_keepdim(1)? + 1e-10)?.sqrt()?;
            out.push(h.broadcast_div(&norm)?);
        }
        Ok(out)
    }

    /// Sum over layers of the spatially averaged squared distance between
    /// channel-normalized features.
    pub fn distance(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        if a.dims() != b.dims() {
            return Err(Error::param(format!("perceptual shape mismatch {:?} vs {:?}", a.dims(), b.dims())));
        }
        let fa = self.features(a)?;
        let fb = self.features(b)?;
        let mut total: Option<Tensor> = None;
        for (x, y) in fa.iter().zip(&fb) {
            let d = (x - y)?.sqr()?.sum(1)?.mean_all()?;
            total = Some(match total {
                None => d,
                Some(t) => (t + d)?,
            });
        }
        Ok(total.expect("proxy has layers"))
    }
}

/// Zero-pads the bottom/right edge of an NCHW tensor to even height and
/// width. candle's strided-conv backward only handles even inputs.
pub fn pad_to_even(x: &Tensor) -> Result<Tensor> {
    let (_, _, h, w) = x.dims4()?;
    let x = if h % 2 == 1 { x.pad_with_zeros(2, 0, 1)? } else { x.clone() };
    Ok(if w % 2 == 1 { x.pad_with_zeros(3, 0, 1)? } else { x })
}

/// Weights of the structural and perceptual terms in the reconstruction loss.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossWeights {
    pub ssim: f64,
    pub perceptual: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            ssim: 0.2,
            perceptual: 0.2,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.ssim >= 0.0 && self.perceptual >= 0.0) {
            return Err(Error::Config("loss weights must be non-negative".into()));
        }
        Ok(())
    }
}

/// `L1 + w_ssim·(1 − SSIM) + w_perc·proxy`, skipping zero-weighted terms.
pub fn reconstruction_loss(
    rendered: &Tensor,
    target: &Tensor,
    weights: LossWeights,
    proxy: &PerceptualProxy,
) -> Result<Tensor> {
    if rendered.dims() != target.dims() {
        return Err(Error::param(format!(
            "loss shape mismatch {:?} vs {:?}",
            rendered.dims(),
            target.dims()
        )));
    }
    let mut loss = l1(rendered, target)?;
    if weights.ssim > 0.0 {
        let s = ssim_tensor(rendered, target)?;
        loss = (loss + ((1.0 - s)? * weights.ssim)?)?;
    }
    if weights.perceptual > 0.0 {
        loss = (loss + (proxy.distance(rendered, target)? * weights.perceptual)?)?;
    }
    Ok(loss)
}

/// Softmax over the last axis.
pub fn softmax_last(x: &Tensor) -> Result<Tensor> {
    Ok(candle_nn::ops::softmax(x, D::Minus1)?)
}

pub fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

/// Fails on a non-finite loss with the given context.
pub fn check_finite(v: f64, what: &str) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("{what} is {v}")))
    }
}
