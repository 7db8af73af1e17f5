use crate::image::Image;

use super::project::Splat2D;

/// Contributions with `α·g` below this are skipped.
pub const ALPHA_SKIP: f64 = 1.0 / 255.0;

/// One accepted splat contribution at a pixel, kept for the backward pass.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Contribution {
    /// Position in the input splat slice.
    pub splat: u32,
    pub alpha: f64,
    /// Transmittance before this contribution.
    pub trans: f64,
    pub gauss: f64,
}

/// Composited frame plus the per-pixel contribution lists.
#[derive(Debug, Clone)]
pub struct Composite {
    pub color: Vec<f64>,
    pub alpha: Vec<f64>,
    pub(crate) offsets: Vec<usize>,
    pub(crate) entries: Vec<Contribution>,
}

/// Inclusive pixel range whose centres lie within `radius` of `mean` along one axis.
fn pixel_span(mean: f64, radius: f64, size: usize) -> Option<(usize, usize)> {
    let lo = (mean - radius - 0.5).ceil().max(0.0);
    let hi = (mean + radius - 0.5).floor().min(size as f64 - 1.0);
    (lo <= hi).then_some((lo as usize, hi as usize))
}

/// 2D Gaussian value (peak 1) of `s` at a pixel centre.
pub(crate) fn gaussian_at(s: &Splat2D, px: f64, py: f64) -> f64 {
    let dx = px - s.mean[0];
    let dy = py - s.mean[1];
    let power = -0.5 * (s.conic[0] * dx * dx + 2.0 * s.conic[1] * dx * dy + s.conic[2] * dy * dy);
    power.exp()
}

pub fn composite(splats: &[Splat2D], height: usize, width: usize, background: [f64; 3]) -> Image {
    let c = composite_detailed(splats, height, width, background);
    Image {
        height,
        width,
        data: c.color.iter().map(|&v| v as f32).collect(),
    }
}

/// Front-to-back compositing with depth-sorted splats (ties by source index).
pub fn composite_detailed(
    splats: &[Splat2D],
    height: usize,
    width: usize,
    background: [f64; 3],
) -> Composite {
    let mut order: Vec<usize> = (0..splats.len()).collect();
    order.sort_by(|&a, &b| {
        splats[a]
            .depth
            .total_cmp(&splats[b].depth)
            .then(splats[a].index.cmp(&splats[b].index))
    });

    // Bin splat references per pixel, preserving depth order.
    let npix = height * width;
    let spans: Vec<Option<((usize, usize), (usize, usize))>> = order
        .iter()
        .map(|&k| {
            let s = &splats[k];
            Some((
                pixel_span(s.mean[0], s.radius, width)?,
                pixel_span(s.mean[1], s.radius, height)?,
            ))
        })
        .collect();
    let mut counts = vec![0usize; npix + 1];
    for span in spans.iter().flatten() {
        let ((x0, x1), (y0, y1)) = *span;
        for y in y0..=y1 {
            for x in x0..=x1 {
                counts[y * width + x + 1] += 1;
            }
        }
    }
    for i in 0..npix {
        counts[i + 1] += counts[i];
    }
    let mut cursor = counts.clone();
    let mut binned = vec![0u32; counts[npix]];
    for (&k, span) in order.iter().zip(&spans) {
        if let Some(((x0, x1), (y0, y1))) = *span {
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let p = y * width + x;
                    binned[cursor[p]] = k as u32;
                    cursor[p] += 1;
                }
            }
        }
    }

    let mut color = vec![0.0; npix * 3];
    let mut alpha = vec![0.0; npix];
    let mut offsets = Vec::with_capacity(npix + 1);
    let mut entries = Vec::new();
    offsets.push(0);
    for p in 0..npix {
        let (py, px) = ((p / width) as f64 + 0.5, (p % width) as f64 + 0.5);
        let mut trans = 1.0;
        let mut acc = [0.0; 3];
        for &k in &binned[counts[p]..counts[p + 1]] {
            let s = &splats[k as usize];
            let g = gaussian_at(s, px, py);
            let a = s.opacity * g;
            if a < ALPHA_SKIP {
                continue;
            }
            for ch in 0..3 {
                acc[ch] += s.color[ch] * a * trans;
            }
            entries.push(Contribution {
                splat: k,
                alpha: a,
                trans,
                gauss: g,
            });
            trans *= 1.0 - a;
        }
        for ch in 0..3 {
            color[p * 3 + ch] = acc[ch] + trans * background[ch];
        }
        alpha[p] = 1.0 - trans;
        offsets.push(entries.len());
    }
    Composite {
        color,
        alpha,
        offsets,
        entries,
    }
}
