//! RGB float images, binary masks, resampling and PNG I/O.

use std::path::Path;

use candle_core::{Device, Tensor};

use crate::error::{Error, Result};

/// Row-major RGB image with channels interleaved, values nominally in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

/// Row-major binary mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub height: usize,
    pub width: usize,
    pub data: Vec<bool>,
}

/// Integer pixel rectangle, `top..top+height` by `left..left+width`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Rect {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

impl Image {
    pub fn filled(height: usize, width: usize, rgb: [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(height * width * 3);
        for _ in 0..height * width {
            data.extend_from_slice(&rgb);
        }
        Self {
            height,
            width,
            data,
        }
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(height * width * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(y, x));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    pub fn pixel(&self, y: usize, x: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, y: usize, x: usize, rgb: [f32; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub fn ensure_same_shape(&self, other: &Image) -> Result<()> {
        if self.same_shape(other) && self.data.len() == other.data.len() {
            Ok(())
        } else {
            Err(Error::param(format!(
                "image shapes differ: {}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )))
        }
    }

    /// Channel-first `(3, H, W)` f32 tensor.
    pub fn to_tensor(&self, device: &Device) -> Result<Tensor> {
        let hw = self.height * self.width;
        let mut planar = vec![0f32; hw * 3];
        for p in 0..hw {
            for c in 0..3 {
                planar[c * hw + p] = self.data[p * 3 + c];
            }
        }
        Ok(Tensor::from_vec(planar, (3, self.height, self.width), device)?)
    }

    /// Inverse of [`Image::to_tensor`]; accepts `(3, H, W)` or `(1, 3, H, W)`.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let t = match t.rank() {
            4 => t.squeeze(0)?,
            _ => t.clone(),
        };
        let (c, h, w) = t.dims3()?;
        if c != 3 {
            return Err(Error::param(format!("expected 3 channels, got {c}")));
        }
        let planar = t
            .to_dtype(candle_core::DType::F32)?
            .flatten_all()?
            .to_vec1::<f32>()?;
        let hw = h * w;
        let mut data = vec![0f32; hw * 3];
        for p in 0..hw {
            for c in 0..3 {
                data[p * 3 + c] = planar[c * hw + p];
            }
        }
        Ok(Self {
            height: h,
            width: w,
            data,
        })
    }

    pub fn clamped(&self) -> Self {
        Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        }
    }

    /// Rounds every value through 8-bit storage, as a PNG round trip would.
    pub fn quantized(&self) -> Self {
        Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| quantize(v) as f32 / 255.0).collect(),
        }
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let bytes: Vec<u8> = self.data.iter().map(|&v| quantize(v)).collect();
        let buf = image::RgbImage::from_raw(self.width as u32, self.height as u32, bytes)
            .ok_or_else(|| Error::param("image buffer size mismatch"))?;
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        buf.save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::Missing {
                path: path.to_path_buf(),
            });
        }
        let img = image::open(path)?.to_rgb8();
        let (w, h) = img.dimensions();
        Ok(Self {
            height: h as usize,
            width: w as usize,
            data: img.into_raw().iter().map(|&b| b as f32 / 255.0).collect(),
        })
    }

    /// Bilinear sample at continuous pixel coordinates (pixel centres at
    /// `i + 0.5`), clamping to the edge.
    pub fn sample_bilinear(&self, y: f64, x: f64) -> [f32; 3] {
        let fy = (y - 0.5).clamp(0.0, (self.height - 1) as f64);
        let fx = (x - 0.5).clamp(0.0, (self.width - 1) as f64);
        let y0 = fy.floor() as usize;
        let x0 = fx.floor() as usize;
        let y1 = (y0 + 1).min(self.height - 1);
        let x1 = (x0 + 1).min(self.width - 1);
        let ty = (fy - y0 as f64) as f32;
        let tx = (fx - x0 as f64) as f32;
        let a = self.pixel(y0, x0);
        let b = self.pixel(y0, x1);
        let c = self.pixel(y1, x0);
        let d = self.pixel(y1, x1);
        let mut out = [0f32; 3];
        for k in 0..3 {
            let top = a[k] + (b[k] - a[k]) * tx;
            let bottom = c[k] + (d[k] - c[k]) * tx;
            out[k] = top + (bottom - top) * ty;
        }
        out
    }

    /// Resamples the rectangle `rect` to `height × width` with bilinear filtering.
    pub fn resample_rect(&self, rect: Rect, height: usize, width: usize) -> Self {
        let sy = rect.height as f64 / height as f64;
        let sx = rect.width as f64 / width as f64;
        Self::from_fn(height, width, |i, j| {
            let y = rect.top as f64 + (i as f64 + 0.5) * sy;
            let x = rect.left as f64 + (j as f64 + 0.5) * sx;
            self.sample_bilinear(y, x)
        })
    }

    pub fn resize(&self, height: usize, width: usize) -> Self {
        self.resample_rect(self.full_rect(), height, width)
    }

    pub fn full_rect(&self) -> Rect {
        Rect {
            top: 0,
            left: 0,
            height: self.height,
            width: self.width,
        }
    }

    /// Writes `patch` (resampled to the rectangle's size) into `rect`.
    pub fn paste(&mut self, patch: &Image, rect: Rect) {
        let fitted = if patch.height == rect.height && patch.width == rect.width {
            patch.clone()
        } else {
            patch.resize(rect.height, rect.width)
        };
        for y in 0..rect.height {
            for x in 0..rect.width {
                let (ty, tx) = (rect.top + y, rect.left + x);
                if ty < self.height && tx < self.width {
                    self.set_pixel(ty, tx, fitted.pixel(y, x));
                }
            }
        }
    }

    pub fn mean_abs_diff(&self, other: &Image) -> Result<f64> {
        self.ensure_same_shape(other)?;
        let total: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs() as f64)
            .sum();
        Ok(total / self.data.len().max(1) as f64)
    }
}

fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

impl Mask {
    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![false; height * width],
        }
    }

    pub fn full(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![true; height * width],
        }
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Tight bounding rectangle of the set pixels, `None` when empty.
    pub fn bbox(&self) -> Option<Rect> {
        let mut top = usize::MAX;
        let mut left = usize::MAX;
        let mut bottom = 0;
        let mut right = 0;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(y, x) {
                    top = top.min(y);
                    left = left.min(x);
                    bottom = bottom.max(y);
                    right = right.max(x);
                }
            }
        }
        (top != usize::MAX).then(|| Rect {
            top,
            left,
            height: bottom - top + 1,
            width: right - left + 1,
        })
    }

    /// Mask resampled to a new rectangle size (bilinear coverage > 0.5).
    pub fn resample_rect(&self, rect: Rect, height: usize, width: usize) -> Self {
        let as_image = Image::from_fn(self.height, self.width, |y, x| {
            let v = if self.get(y, x) { 1.0 } else { 0.0 };
            [v, v, v]
        });
        let r = as_image.resample_rect(rect, height, width);
        Self {
            height,
            width,
            data: (0..height * width).map(|p| r.data[p * 3] > 0.5).collect(),
        }
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let bytes: Vec<u8> = self.data.iter().map(|&b| if b { 255 } else { 0 }).collect();
        let buf = image::GrayImage::from_raw(self.width as u32, self.height as u32, bytes)
            .ok_or_else(|| Error::param("mask buffer size mismatch"))?;
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        buf.save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::Missing {
                path: path.to_path_buf(),
            });
        }
        let img = image::open(path)?.to_luma8();
        let (w, h) = img.dimensions();
        Ok(Self {
            height: h as usize,
            width: w as usize,
            data: img.into_raw().iter().map(|&b| b >= 128).collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_round_trip_preserves_layout() {
        let img = Image::from_fn(3, 4, |y, x| [y as f32, x as f32, 0.5]);
        let t = img.to_tensor(&Device::Cpu).unwrap();
        assert_eq!(t.dims(), &[3, 3, 4]);
        assert_eq!(Image::from_tensor(&t).unwrap(), img);
    }

    #[test]
    fn identity_resize_is_exact() {
        let img = Image::from_fn(5, 7, |y, x| [(y * 7 + x) as f32 / 35.0, 0.0, 1.0]);
        let same = img.resize(5, 7);
        assert_eq!(same, img);
    }

    #[test]
    fn mask_bbox() {
        let mut m = Mask::empty(10, 10);
        assert!(m.bbox().is_none());
        m.set(2, 3, true);
        m.set(6, 4, true);
        assert_eq!(
            m.bbox(),
            Some(Rect {
                top: 2,
                left: 3,
                height: 5,
                width: 2
            })
        );
    }

    #[test]
    fn png_round_trip_is_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image::from_fn(4, 6, |y, x| [y as f32 / 3.0, x as f32 / 5.0, 0.3]);
        let path = dir.path().join("a.png");
        img.save_png(&path).unwrap();
        let back = Image::load_png(&path).unwrap();
        assert_eq!(back, img.quantized());
    }
}
