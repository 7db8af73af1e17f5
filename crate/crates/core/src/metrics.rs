//! Image fidelity metrics in double precision.

use crate::error::{Error, Result};
use crate::image::Image;

/// Reported for identical images instead of infinity.
pub const PSNR_CAP: f64 = 99.0;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

/// Peak signal-to-noise ratio on unit dynamic range, capped at [`PSNR_CAP`].
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let mse = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
        .sum::<f64>()
        / a.data.len().max(1) as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP))
}

/// Normalized 1D Gaussian taps; the 2D window is their outer product.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Mean local SSIM over all valid 11×11 windows and the three channels.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    a.ensure_same_shape(b)?;
    if a.height < SSIM_WINDOW || a.width < SSIM_WINDOW {
        return Err(Error::param(format!(
            "ssim needs at least {SSIM_WINDOW}×{SSIM_WINDOW} pixels, got {}×{}",
            a.height, a.width
        )));
    }
    let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let (h, w) = (a.height, a.width);
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut total = 0.0;
    for ch in 0..3 {
        let pa: Vec<f64> = (0..h * w).map(|p| a.data[p * 3 + ch] as f64).collect();
        let pb: Vec<f64> = (0..h * w).map(|p| b.data[p * 3 + ch] as f64).collect();
        let prod = |f: &dyn Fn(usize) -> f64| -> Vec<f64> { (0..h * w).map(f).collect() };
        let maps = [
            pa.clone(),
            pb.clone(),
            prod(&|p| pa[p] * pa[p]),
            prod(&|p| pb[p] * pb[p]),
            prod(&|p| pa[p] * pb[p]),
        ];
        let filtered: Vec<Vec<f64>> = maps.iter().map(|m| filter_valid(m, h, w, &taps)).collect();
        for i in 0..oh * ow {
            let (mu_a, mu_b) = (filtered[0][i], filtered[1][i]);
            let var_a = filtered[2][i] - mu_a * mu_a;
            let var_b = filtered[3][i] - mu_b * mu_b;
            let cov = filtered[4][i] - mu_a * mu_b;
            total += ((2.0 * mu_a * mu_b + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2));
        }
    }
    Ok(total / (3 * oh * ow) as f64)
}

/// Separable valid-mode filtering of a single-channel plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let ow = w - k + 1;
    let oh = h - k + 1;
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..k).map(|i| taps[i] * plane[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..k).map(|i| taps[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}
