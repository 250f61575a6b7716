//! Meta-selector inputs: a normalized lesion patch plus a small appearance
//! descriptor vector summarizing the cues that decide which classifier to
//! trust (shadowing below the lesion, speckle noise inside it, border
//! sharpness, contrast, and gross shape statistics).

use ndarray::{Array2, ArrayView2};

use crate::dataio::ImageSample;
use crate::morphology::{trace_boundary, trace_geometry};

pub const DESCRIPTOR_NAMES: [&str; 6] = [
    "border_gradient",
    "shadow_score",
    "noise_score",
    "lesion_contrast",
    "solidity",
    "log_area",
];

/// Input to the meta-selector for one sample.
#[derive(Debug, Clone)]
pub struct MetaInput {
    /// Lesion crop resized to `size` x `size`, intensities in [0, 1].
    pub patch: Array2<f64>,
    /// Appearance descriptors in [`DESCRIPTOR_NAMES`] order.
    pub descriptors: [f64; 6],
}

impl MetaInput {
    pub fn size(&self) -> usize {
        self.patch.nrows()
    }
}

/// Crop the mask bounding box padded by 20% per side (clamped to the image),
/// resize to `size` x `size` with bilinear resampling, and compute the
/// descriptor vector on the un-resized crop.
pub fn make_meta_input(sample: &ImageSample, size: usize) -> MetaInput {
    let (h, w) = sample.image.dim();
    let (mut x0, mut x1, mut y0, mut y1) = (usize::MAX, 0usize, usize::MAX, 0usize);
    for ((y, x), &m) in sample.mask.indexed_iter() {
        if m != 0 {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
    }
    let bw = x1 - x0 + 1;
    let bh = y1 - y0 + 1;
    let pad_x = (bw as f64 * 0.2).round() as usize;
    let pad_y = (bh as f64 * 0.2).round() as usize;
    let crop = CropRect {
        x0: x0.saturating_sub(pad_x),
        y0: y0.saturating_sub(pad_y),
        x1: (x1 + pad_x).min(w - 1),
        y1: (y1 + pad_y).min(h - 1),
    };

    let patch = bilinear_resize(&sample.image.view(), &crop, size);
    let descriptors = compute_descriptors(sample, &crop, (x0, y0, x1, y1));

    MetaInput { patch, descriptors }
}

#[derive(Debug, Clone, Copy)]
struct CropRect {
    x0: usize,
    y0: usize,
    x1: usize,
    y1: usize,
}

fn bilinear_resize(image: &ArrayView2<u8>, crop: &CropRect, size: usize) -> Array2<f64> {
    let src_h = (crop.y1 - crop.y0 + 1) as f64;
    let src_w = (crop.x1 - crop.x0 + 1) as f64;
    let scale_y = src_h / size as f64;
    let scale_x = src_w / size as f64;
    Array2::from_shape_fn((size, size), |(oy, ox)| {
        let sy = ((oy as f64 + 0.5) * scale_y - 0.5).clamp(0.0, src_h - 1.0);
        let sx = ((ox as f64 + 0.5) * scale_x - 0.5).clamp(0.0, src_w - 1.0);
        let y_lo = sy.floor() as usize;
        let x_lo = sx.floor() as usize;
        let y_hi = (y_lo + 1).min(src_h as usize - 1);
        let x_hi = (x_lo + 1).min(src_w as usize - 1);
        let fy = sy - y_lo as f64;
        let fx = sx - x_lo as f64;
        let at = |y: usize, x: usize| image[(crop.y0 + y, crop.x0 + x)] as f64;
        let top = at(y_lo, x_lo) * (1.0 - fx) + at(y_lo, x_hi) * fx;
        let bot = at(y_hi, x_lo) * (1.0 - fx) + at(y_hi, x_hi) * fx;
        (top * (1.0 - fy) + bot * fy) / 255.0
    })
}

fn compute_descriptors(
    sample: &ImageSample,
    crop: &CropRect,
    bbox: (usize, usize, usize, usize),
) -> [f64; 6] {
    let image = &sample.image;
    let mask = &sample.mask;

    let area = sample.mask_area() as f64;
    let border_gradient = boundary_gradient(image, mask);
    let shadow = shadow_score(image, crop, bbox);
    let noise = noise_score(image, mask);
    let contrast = lesion_contrast(image, mask, crop);
    let solidity = trace_geometry(&mask.view())
        .map(|g| g.area / g.hull_area)
        .unwrap_or(1.0);

    [
        border_gradient,
        shadow,
        noise,
        contrast,
        solidity,
        area.ln(),
    ]
}

/// Mean central-difference gradient magnitude along the mask boundary.
fn boundary_gradient(image: &Array2<u8>, mask: &Array2<u8>) -> f64 {
    let (h, w) = image.dim();
    let boundary = trace_boundary(&mask.view());
    if boundary.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for &(x, y) in &boundary {
        let (x, y) = (x as usize, y as usize);
        let xl = image[(y, x.saturating_sub(1))] as f64;
        let xr = image[(y, (x + 1).min(w - 1))] as f64;
        let yu = image[(y.saturating_sub(1), x)] as f64;
        let yd = image[((y + 1).min(h - 1), x)] as f64;
        total += ((xr - xl) / 2.0).hypot((yd - yu) / 2.0);
    }
    total / boundary.len() as f64
}

/// How much darker the band below the lesion is than its left/right flanks
/// at the same depth. Positive values indicate a shadow.
fn shadow_score(image: &Array2<u8>, crop: &CropRect, bbox: (usize, usize, usize, usize)) -> f64 {
    let (bx0, by0, bx1, by1) = bbox;
    let band_h = ((by1 - by0 + 1) / 2).max(4);
    let band_w = ((bx1 - bx0 + 1) / 2).max(4);

    let rows = (by1 + 1)..=(by1 + band_h).min(crop.y1);
    if rows.is_empty() {
        return 0.0;
    }

    let mut below = MeanAcc::default();
    let mut flank = MeanAcc::default();
    for y in rows {
        for x in bx0..=bx1 {
            below.push(image[(y, x)] as f64);
        }
        let left_lo = bx0.saturating_sub(band_w).max(crop.x0);
        for x in left_lo..bx0 {
            flank.push(image[(y, x)] as f64);
        }
        let right_hi = (bx1 + band_w).min(crop.x1);
        for x in (bx1 + 1)..=right_hi {
            flank.push(image[(y, x)] as f64);
        }
    }
    match (below.mean(), flank.mean()) {
        (Some(b), Some(f)) => f - b,
        _ => 0.0,
    }
}

/// Median of 3x3 local standard deviations at in-mask pixels.
fn noise_score(image: &Array2<u8>, mask: &Array2<u8>) -> f64 {
    let (h, w) = image.dim();
    let mut stds = Vec::new();
    for ((y, x), &m) in mask.indexed_iter() {
        if m == 0 {
            continue;
        }
        let mut acc = MeanAcc::default();
        let mut sq = 0.0;
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let ny = (y as i64 + dy).clamp(0, h as i64 - 1) as usize;
                let nx = (x as i64 + dx).clamp(0, w as i64 - 1) as usize;
                let v = image[(ny, nx)] as f64;
                acc.push(v);
                sq += v * v;
            }
        }
        let mean = acc.mean().unwrap();
        stds.push((sq / acc.count as f64 - mean * mean).max(0.0).sqrt());
    }
    if stds.is_empty() {
        return 0.0;
    }
    stds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    stds[(stds.len() - 1) / 2]
}

/// Mean intensity inside the lesion minus the mean of a 10-px outer ring.
fn lesion_contrast(image: &Array2<u8>, mask: &Array2<u8>, crop: &CropRect) -> f64 {
    let dist = chebyshev_distance(mask);
    let mut inside = MeanAcc::default();
    let mut ring = MeanAcc::default();
    for ((y, x), &m) in mask.indexed_iter() {
        if m != 0 {
            inside.push(image[(y, x)] as f64);
        } else if dist[(y, x)] <= 10
            && y >= crop.y0
            && y <= crop.y1
            && x >= crop.x0
            && x <= crop.x1
        {
            ring.push(image[(y, x)] as f64);
        }
    }
    match (inside.mean(), ring.mean()) {
        (Some(i), Some(r)) => i - r,
        _ => 0.0,
    }
}

/// Exact Chebyshev distance to the mask via a two-pass 8-neighbor chamfer.
fn chebyshev_distance(mask: &Array2<u8>) -> Array2<u32> {
    let (h, w) = mask.dim();
    const INF: u32 = u32::MAX / 2;
    let mut d = Array2::from_shape_fn((h, w), |(y, x)| if mask[(y, x)] != 0 { 0 } else { INF });
    for y in 0..h {
        for x in 0..w {
            if d[(y, x)] == 0 {
                continue;
            }
            let mut best = d[(y, x)];
            if x > 0 {
                best = best.min(d[(y, x - 1)] + 1);
            }
            if y > 0 {
                best = best.min(d[(y - 1, x)] + 1);
                if x > 0 {
                    best = best.min(d[(y - 1, x - 1)] + 1);
                }
                if x + 1 < w {
                    best = best.min(d[(y - 1, x + 1)] + 1);
                }
            }
            d[(y, x)] = best;
        }
    }
    for y in (0..h).rev() {
        for x in (0..w).rev() {
            if d[(y, x)] == 0 {
                continue;
            }
            let mut best = d[(y, x)];
            if x + 1 < w {
                best = best.min(d[(y, x + 1)] + 1);
            }
            if y + 1 < h {
                best = best.min(d[(y + 1, x)] + 1);
                if x > 0 {
                    best = best.min(d[(y + 1, x - 1)] + 1);
                }
                if x + 1 < w {
                    best = best.min(d[(y + 1, x + 1)] + 1);
                }
            }
            d[(y, x)] = best;
        }
    }
    d
}

#[derive(Default)]
struct MeanAcc {
    sum: f64,
    count: usize,
}

impl MeanAcc {
    fn push(&mut self, v: f64) {
        self.sum += v;
        self.count += 1;
    }
    fn mean(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }
}
