use candle_core::{CpuStorage, CustomOp1, DType, Layout, Shape, Tensor};

use crate::camera::CameraPose;
use crate::error::Result;

use super::{render_backward, render_detailed, GaussianCloud, PARAMS_PER_GAUSSIAN};

/// The renderer as a candle op: `(N, 14)` packed cloud in, `(3, H, W)` image out.
/// Works for `f32` and `f64` inputs; computation is always `f64`.
#[derive(Debug, Clone)]
pub struct RenderOp {
    pub camera: CameraPose,
    pub background: [f64; 3],
}

fn wrap(e: crate::error::Error) -> candle_core::Error {
    candle_core::Error::Msg(e.to_string())
}

fn storage_to_f64(storage: &CpuStorage, layout: &Layout) -> candle_core::Result<Vec<f64>> {
    let (start, end) = layout
        .contiguous_offsets()
        .ok_or_else(|| candle_core::Error::Msg("render op needs a contiguous input".into()))?;
    Ok(match storage {
        CpuStorage::F32(v) => v[start..end].iter().map(|&x| x as f64).collect(),
        CpuStorage::F64(v) => v[start..end].to_vec(),
        _ => return Err(candle_core::Error::Msg("render op supports f32 and f64".into())),
    })
}

impl RenderOp {
    fn cloud_from(&self, packed: &[f64], dims: &[usize]) -> candle_core::Result<GaussianCloud> {
        if dims.len() != 2 || dims[1] != PARAMS_PER_GAUSSIAN {
            return Err(candle_core::Error::Msg(format!(
                "render op expects (N, {PARAMS_PER_GAUSSIAN}), got {dims:?}"
            )));
        }
        GaussianCloud::from_packed(packed).map_err(wrap)
    }

    /// HWC interleaved colour to CHW.
    fn chw(&self, hwc: &[f64]) -> Vec<f64> {
        let (h, w) = (self.camera.height, self.camera.width);
        let mut out = vec![0.0; hwc.len()];
        for p in 0..h * w {
            for ch in 0..3 {
                out[ch * h * w + p] = hwc[p * 3 + ch];
            }
        }
        out
    }
}

impl CustomOp1 for RenderOp {
    fn name(&self) -> &'static str {
        "gaussian-render"
    }

    fn cpu_fwd(&self, storage: &CpuStorage, layout: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        let packed = storage_to_f64(storage, layout)?;
        let cloud = self.cloud_from(&packed, layout.dims())?;
        let res = render_detailed(&cloud, &self.camera, self.background).map_err(wrap)?;
        let chw = self.chw(&res.color);
        let shape = Shape::from((3, self.camera.height, self.camera.width));
        let out = match storage {
            CpuStorage::F64(_) => CpuStorage::F64(chw),
            _ => CpuStorage::F32(chw.into_iter().map(|v| v as f32).collect()),
        };
        Ok((out, shape))
    }

    fn bwd(&self, arg: &Tensor, _res: &Tensor, grad_res: &Tensor) -> candle_core::Result<Option<Tensor>> {
        let dtype = arg.dtype();
        let packed: Vec<f64> = arg.to_dtype(DType::F64)?.flatten_all()?.to_vec1()?;
        let cloud = self.cloud_from(&packed, arg.dims())?;
        let g: Vec<f64> = grad_res.to_dtype(DType::F64)?.flatten_all()?.to_vec1()?;
        let (h, w) = (self.camera.height, self.camera.width);
        let mut hwc = vec![0.0; g.len()];
        for p in 0..h * w {
            for ch in 0..3 {
                hwc[p * 3 + ch] = g[ch * h * w + p];
            }
        }
        let grad = render_backward(&cloud, &self.camera, self.background, &hwc).map_err(wrap)?;
        let t = Tensor::from_vec(grad.to_packed(), arg.dims(), arg.device())?.to_dtype(dtype)?;
        Ok(Some(t))
    }
}

/// Renders a packed `(N, 14)` tensor to a `(3, H, W)` tensor with autograd support.
pub fn render_tensor(packed: &Tensor, camera: &CameraPose, background: [f64; 3]) -> Result<Tensor> {
    camera.validate()?;
    Ok(packed.contiguous()?.apply_op1(RenderOp {
        camera: camera.clone(),
        background,
    })?)
}
