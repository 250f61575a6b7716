//! The 15 morphological features computed from a binary lesion mask.
//!
//! The feature set follows the breast-lesion shape-descriptor literature:
//! bounding-box proportions, isoperimetric measures, convexity and residual
//! measures against the convex hull, equivalent-ellipse measures, and
//! normalized radial length (NRL) statistics. Exact formula conventions are
//! documented on [`compute_morph_features`].

pub mod contour;
mod skeleton;

use ndarray::ArrayView2;

pub use contour::{trace_boundary, trace_geometry, ContourGeometry, Ellipse, RADIAL_BINS};
pub use skeleton::skeleton_length;

use crate::error::Result;

/// Column order is a compatibility contract for CSV export.
pub const MORPH_FEATURE_NAMES: [&str; 15] = [
    "depth_to_width",
    "area",
    "circularity",
    "roundness",
    "nrv",
    "overlap_ratio",
    "convexity",
    "orientation",
    "axis_ratio",
    "ens",
    "enc",
    "nrl_mean",
    "nrl_std",
    "area_ratio",
    "roughness",
];

/// The 15 morphological features, in export order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MorphFeatures {
    /// Bounding-box height / width.
    pub depth_to_width: f64,
    /// Region area in pixels.
    pub area: f64,
    /// 4*pi*A / P^2.
    pub circularity: f64,
    /// 4*A / (pi * max(bbox_h, bbox_w)^2).
    pub roundness: f64,
    /// Normalized residual value (hull_area - A) / hull_area.
    pub nrv: f64,
    /// Jaccard overlap between the mask and its equivalent-ellipse raster.
    pub overlap_ratio: f64,
    /// Hull perimeter / region perimeter.
    pub convexity: f64,
    /// Equivalent-ellipse orientation, degrees in [0, 180).
    pub orientation: f64,
    /// Ellipse major / minor axis.
    pub axis_ratio: f64,
    /// Skeleton length / ellipse perimeter.
    pub ens: f64,
    /// Region perimeter / ellipse perimeter.
    pub enc: f64,
    /// Mean of the normalized radial profile.
    pub nrl_mean: f64,
    /// Standard deviation of the normalized radial profile.
    pub nrl_std: f64,
    /// Mean positive excursion of the radial profile above its mean.
    pub area_ratio: f64,
    /// Mean absolute step of the radial profile (cyclic).
    pub roughness: f64,
}

impl MorphFeatures {
    pub fn to_vec(&self) -> Vec<f64> {
        vec![
            self.depth_to_width,
            self.area,
            self.circularity,
            self.roundness,
            self.nrv,
            self.overlap_ratio,
            self.convexity,
            self.orientation,
            self.axis_ratio,
            self.ens,
            self.enc,
            self.nrl_mean,
            self.nrl_std,
            self.area_ratio,
            self.roughness,
        ]
    }
}

/// Compute the 15 features from a traced geometry and its mask.
///
/// The radial statistics (`nrl_mean`, `nrl_std`, `area_ratio`, `roughness`)
/// are evaluated on the fixed-length equiangular radial profile of
/// [`ContourGeometry::radial`], so they are stable across image resolutions.
pub fn compute_morph_features(geom: &ContourGeometry, mask: &ArrayView2<u8>) -> MorphFeatures {
    let (bbox_w, bbox_h) = geom.bbox;
    let a = geom.area;
    let p = geom.perimeter;

    let ellipse_perimeter = geom.ellipse.perimeter();
    let skeleton = skeleton_length(mask);

    let dmax = geom
        .radial
        .iter()
        .cloned()
        .fold(f64::MIN, f64::max)
        .max(f64::MIN_POSITIVE);
    let n = geom.radial.len() as f64;
    let normalized: Vec<f64> = geom.radial.iter().map(|d| d / dmax).collect();
    let nrl_mean = normalized.iter().sum::<f64>() / n;
    let nrl_var = normalized
        .iter()
        .map(|d| (d - nrl_mean).powi(2))
        .sum::<f64>()
        / n;
    let area_ratio = normalized
        .iter()
        .filter(|&&d| d > nrl_mean)
        .map(|d| d - nrl_mean)
        .sum::<f64>()
        / (n * nrl_mean);
    let roughness = (0..normalized.len())
        .map(|i| (normalized[i] - normalized[(i + 1) % normalized.len()]).abs())
        .sum::<f64>()
        / n;

    MorphFeatures {
        depth_to_width: bbox_h as f64 / bbox_w as f64,
        area: a,
        circularity: 4.0 * std::f64::consts::PI * a / (p * p),
        roundness: 4.0 * a
            / (std::f64::consts::PI * (bbox_w.max(bbox_h) as f64).powi(2)),
        nrv: (geom.hull_area - a) / geom.hull_area,
        overlap_ratio: ellipse_overlap(geom, mask),
        convexity: geom.hull_perimeter / p,
        orientation: geom.ellipse.orientation_deg,
        axis_ratio: geom.ellipse.major / geom.ellipse.minor,
        ens: skeleton / ellipse_perimeter,
        enc: p / ellipse_perimeter,
        nrl_mean,
        nrl_std: nrl_var.sqrt(),
        area_ratio,
        roughness,
    }
}

/// Trace and compute in one step.
pub fn morph_features(mask: &ArrayView2<u8>) -> Result<MorphFeatures> {
    let geom = trace_geometry(mask)?;
    Ok(compute_morph_features(&geom, mask))
}

/// Jaccard overlap |mask ∩ E| / |mask ∪ E| with the equivalent-ellipse raster.
fn ellipse_overlap(geom: &ContourGeometry, mask: &ArrayView2<u8>) -> f64 {
    let (h, w) = mask.dim();
    let (cx, cy) = geom.centroid;
    let theta = geom.ellipse.orientation_deg.to_radians();
    let (sin_t, cos_t) = theta.sin_cos();
    let (a, b) = (geom.ellipse.major, geom.ellipse.minor);

    let mut intersection = 0usize;
    let mut union = 0usize;
    for y in 0..h {
        for x in 0..w {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            let u = (dx * cos_t + dy * sin_t) / a;
            let v = (-dx * sin_t + dy * cos_t) / b;
            let in_ellipse = u * u + v * v <= 1.0;
            let in_mask = mask[(y, x)] != 0;
            if in_ellipse && in_mask {
                intersection += 1;
            }
            if in_ellipse || in_mask {
                union += 1;
            }
        }
    }
    if union == 0 {
        0.0
    } else {
        intersection as f64 / union as f64
    }
}
