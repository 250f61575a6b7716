//! GLCM texture features over the lesion region.
//!
//! 7 statistics x 16 co-occurrence specs (2 quantization levels, 2
//! distances, 4 orientations) = 112 features per image. Matrices are
//! symmetric and normalized; pairs count only when both pixels lie inside
//! the mask.

use std::sync::OnceLock;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// One co-occurrence configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GlcmSpec {
    /// Quantization levels, 4 or 16.
    pub levels: usize,
    /// Pair distance in pixels, 1 or 5.
    pub distance: usize,
    /// Orientation in degrees: 0, 45, 90, or 135.
    pub angle: u16,
}

impl GlcmSpec {
    /// Pixel offset (dx, dy) for this spec; the y axis points down, so 45
    /// degrees steps up-right.
    pub fn offset(&self) -> (i32, i32) {
        let d = self.distance as i32;
        match self.angle {
            0 => (d, 0),
            45 => (d, -d),
            90 => (0, -d),
            135 => (-d, -d),
            other => unreachable!("invalid GLCM angle {other}"),
        }
    }

    pub fn column_suffix(&self) -> String {
        format!("L{}_D{}_A{}", self.levels, self.distance, self.angle)
    }
}

pub const GLCM_LEVELS: [usize; 2] = [4, 16];
pub const GLCM_DISTANCES: [usize; 2] = [1, 5];
pub const GLCM_ANGLES: [u16; 4] = [0, 45, 90, 135];

/// The 16 specs in fixed order: levels-major, then distance, then angle.
pub fn all_specs() -> [GlcmSpec; 16] {
    let mut out = [GlcmSpec {
        levels: 4,
        distance: 1,
        angle: 0,
    }; 16];
    let mut i = 0;
    for &levels in &GLCM_LEVELS {
        for &distance in &GLCM_DISTANCES {
            for &angle in &GLCM_ANGLES {
                out[i] = GlcmSpec {
                    levels,
                    distance,
                    angle,
                };
                i += 1;
            }
        }
    }
    out
}

/// Normalized symmetric co-occurrence matrix.
#[derive(Debug, Clone)]
pub struct Glcm {
    pub p: Array2<f64>,
    /// Number of raw in-mask pairs accumulated (before symmetrization).
    pub valid_pairs: usize,
}

/// Quantize mask intensities to `levels` bins by uniform min-max binning.
/// A constant region maps entirely to bin 0. Values outside the mask are
/// left at bin 0 and must not be read.
pub fn quantize(image: &ArrayView2<u8>, mask: &ArrayView2<u8>, levels: usize) -> Array2<u8> {
    let mut min = u8::MAX;
    let mut max = u8::MIN;
    for (v, m) in image.iter().zip(mask.iter()) {
        if *m != 0 {
            min = min.min(*v);
            max = max.max(*v);
        }
    }
    let mut q = Array2::zeros(image.dim());
    if min >= max {
        return q; // empty or constant region
    }
    let range = (max - min) as usize + 1;
    for ((y, x), v) in image.indexed_iter() {
        if mask[(y, x)] != 0 {
            q[(y, x)] = ((*v - min) as usize * levels / range) as u8;
        }
    }
    q
}

/// Accumulate the symmetric, normalized GLCM for one spec. Both pixels of a
/// pair must lie inside the mask.
pub fn compute_glcm(
    quantized: &ArrayView2<u8>,
    mask: &ArrayView2<u8>,
    spec: &GlcmSpec,
) -> Result<Glcm> {
    let (h, w) = quantized.dim();
    let (dx, dy) = spec.offset();
    let mut counts = Array2::<f64>::zeros((spec.levels, spec.levels));
    let mut pairs = 0usize;
    for y in 0..h as i32 {
        for x in 0..w as i32 {
            if mask[(y as usize, x as usize)] == 0 {
                continue;
            }
            let (nx, ny) = (x + dx, y + dy);
            if nx < 0 || ny < 0 || nx >= w as i32 || ny >= h as i32 {
                continue;
            }
            if mask[(ny as usize, nx as usize)] == 0 {
                continue;
            }
            let i = quantized[(y as usize, x as usize)] as usize;
            let j = quantized[(ny as usize, nx as usize)] as usize;
            counts[(i, j)] += 1.0;
            counts[(j, i)] += 1.0;
            pairs += 1;
        }
    }
    if pairs == 0 {
        return Err(Error::Texture(format!(
            "no co-occurring pairs for {:?}",
            spec
        )));
    }
    let total = (2 * pairs) as f64;
    counts.mapv_inplace(|c| c / total);
    Ok(Glcm {
        p: counts,
        valid_pairs: pairs,
    })
}

pub const GLCM_STAT_NAMES: [&str; 7] = [
    "contrast",
    "correlation",
    "energy",
    "variance",
    "max_probability",
    "autocorrelation",
    "homogeneity",
];

/// The seven per-matrix statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlcmStats {
    pub contrast: f64,
    pub correlation: f64,
    pub energy: f64,
    pub variance: f64,
    pub max_probability: f64,
    pub autocorrelation: f64,
    pub homogeneity: f64,
}

impl GlcmStats {
    /// Statistics of the single-entry matrix p[0][0] = 1, used as the
    /// fallback for specs with no valid pairs.
    pub const DEGENERATE: GlcmStats = GlcmStats {
        contrast: 0.0,
        correlation: 0.0,
        energy: 1.0,
        variance: 0.0,
        max_probability: 1.0,
        autocorrelation: 0.0,
        homogeneity: 1.0,
    };

    pub fn to_array(self) -> [f64; 7] {
        [
            self.contrast,
            self.correlation,
            self.energy,
            self.variance,
            self.max_probability,
            self.autocorrelation,
            self.homogeneity,
        ]
    }
}

/// Compute the seven statistics of a normalized symmetric GLCM.
/// Correlation of a zero-variance matrix is defined as 0.
pub fn glcm_statistics(glcm: &Glcm) -> GlcmStats {
    let p = &glcm.p;
    let n = p.nrows();

    // marginal distribution (rows == cols by symmetry)
    let mut marginal = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            marginal[i] += p[(i, j)];
        }
    }
    let mean: f64 = marginal.iter().enumerate().map(|(i, m)| i as f64 * m).sum();
    let var: f64 = marginal
        .iter()
        .enumerate()
        .map(|(i, m)| (i as f64 - mean).powi(2) * m)
        .sum();

    let mut contrast = 0.0;
    let mut corr_num = 0.0;
    let mut energy = 0.0;
    let mut variance = 0.0;
    let mut max_probability = 0.0f64;
    let mut autocorrelation = 0.0;
    let mut homogeneity = 0.0;
    for i in 0..n {
        for j in 0..n {
            let v = p[(i, j)];
            let (fi, fj) = (i as f64, j as f64);
            contrast += (fi - fj) * (fi - fj) * v;
            corr_num += (fi - mean) * (fj - mean) * v;
            energy += v * v;
            variance += (fi - mean) * (fi - mean) * v;
            max_probability = max_probability.max(v);
            autocorrelation += fi * fj * v;
            homogeneity += v / (1.0 + (fi - fj).abs());
        }
    }
    let correlation = if var > 0.0 { corr_num / var } else { 0.0 };

    GlcmStats {
        contrast,
        correlation,
        energy,
        variance,
        max_probability,
        autocorrelation,
        homogeneity,
    }
}

pub const TEXTURE_FEATURE_COUNT: usize = 112;

/// Fixed 112-column names: statistic-major, then levels, distance, angle
/// (e.g. `contrast_L4_D1_A0`).
pub fn texture_feature_names() -> &'static [String; TEXTURE_FEATURE_COUNT] {
    static NAMES: OnceLock<[String; TEXTURE_FEATURE_COUNT]> = OnceLock::new();
    NAMES.get_or_init(|| {
        let mut names: Vec<String> = Vec::with_capacity(TEXTURE_FEATURE_COUNT);
        for stat in GLCM_STAT_NAMES {
            for spec in all_specs() {
                names.push(format!("{stat}_{}", spec.column_suffix()));
            }
        }
        names.try_into().expect("112 names")
    })
}

/// The 112-feature texture vector in fixed column order.
#[derive(Debug, Clone, PartialEq)]
pub struct TextureFeatures {
    pub values: Vec<f64>,
}

/// Compute all 112 texture features. Specs with no valid pairs fall back to
/// the constant-image statistics, so the vector is always total and finite.
pub fn compute_texture_features(
    image: &ArrayView2<u8>,
    mask: &ArrayView2<u8>,
) -> TextureFeatures {
    let specs = all_specs();
    let mut per_spec = [GlcmStats::DEGENERATE; 16];

    for &levels in &GLCM_LEVELS {
        let q = quantize(image, mask, levels);
        for (idx, spec) in specs.iter().enumerate() {
            if spec.levels != levels {
                continue;
            }
            if let Ok(glcm) = compute_glcm(&q.view(), mask, spec) {
                per_spec[idx] = glcm_statistics(&glcm);
            }
        }
    }

    let mut values = Vec::with_capacity(TEXTURE_FEATURE_COUNT);
    for stat_idx in 0..GLCM_STAT_NAMES.len() {
        for stats in &per_spec {
            values.push(stats.to_array()[stat_idx]);
        }
    }
    TextureFeatures { values }
}

impl TextureFeatures {
    /// Value by column name (test convenience; O(n)).
    pub fn get(&self, name: &str) -> Option<f64> {
        texture_feature_names()
            .iter()
            .position(|n| n == name)
            .map(|i| self.values[i])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn full_mask(dim: (usize, usize)) -> Array2<u8> {
        Array2::from_elem(dim, 1)
    }

    #[test]
    fn quantize_uniform_range_boundaries() {
        let vals = [0u8, 63, 64, 127, 128, 191, 192, 255];
        let image = Array2::from_shape_vec((1, 8), vals.to_vec()).unwrap();
        // pad the row so min/max cover the whole range
        let mask = full_mask((1, 8));
        let q = quantize(&image.view(), &mask.view(), 4);
        assert_eq!(
            q.iter().cloned().collect::<Vec<_>>(),
            vec![0, 0, 1, 1, 2, 2, 3, 3]
        );
    }

    #[test]
    fn quantize_constant_region_all_zero() {
        let image = Array2::from_elem((4, 4), 77u8);
        let q = quantize(&image.view(), &full_mask((4, 4)).view(), 16);
        assert!(q.iter().all(|&v| v == 0));
    }

    #[test]
    fn quantize_stretches_min_max() {
        let image = Array2::from_shape_vec((1, 4), vec![10u8, 20, 30, 40]).unwrap();
        let q = quantize(&image.view(), &full_mask((1, 4)).view(), 4);
        assert_eq!(q.iter().cloned().collect::<Vec<_>>(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn glcm_matches_hand_enumeration() {
        // rows [0,0,1 / 0,1,1 / 1,1,1]: six horizontal pairs
        let q = array![[0u8, 0, 1], [0, 1, 1], [1, 1, 1]];
        let glcm = compute_glcm(
            &q.view(),
            &full_mask((3, 3)).view(),
            &GlcmSpec {
                levels: 2,
                distance: 1,
                angle: 0,
            },
        )
        .unwrap();
        assert_eq!(glcm.valid_pairs, 6);
        let expected = array![[2.0 / 12.0, 2.0 / 12.0], [2.0 / 12.0, 6.0 / 12.0]];
        for (a, b) in glcm.p.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
    }

    #[test]
    fn constant_image_concentrates_at_origin() {
        let q = Array2::<u8>::zeros((5, 5));
        let glcm = compute_glcm(
            &q.view(),
            &full_mask((5, 5)).view(),
            &GlcmSpec {
                levels: 4,
                distance: 1,
                angle: 90,
            },
        )
        .unwrap();
        assert_eq!(glcm.p[(0, 0)], 1.0);
    }

    #[test]
    fn single_pixel_mask_has_no_pairs() {
        let q = Array2::<u8>::zeros((5, 5));
        let mut mask = Array2::<u8>::zeros((5, 5));
        mask[(2, 2)] = 1;
        let err = compute_glcm(
            &q.view(),
            &mask.view(),
            &GlcmSpec {
                levels: 4,
                distance: 1,
                angle: 0,
            },
        )
        .unwrap_err();
        assert!(err.to_string().contains("no co-occurring pairs"));
    }

    #[test]
    fn statistics_match_hand_evaluation() {
        let glcm = Glcm {
            p: array![[1.0 / 6.0, 1.0 / 6.0], [1.0 / 6.0, 1.0 / 2.0]],
            valid_pairs: 3,
        };
        let s = glcm_statistics(&glcm);
        assert!((s.contrast - 1.0 / 3.0).abs() < 1e-14);
        assert!((s.energy - 1.0 / 3.0).abs() < 1e-14);
        assert!((s.max_probability - 0.5).abs() < 1e-14);
        assert!((s.autocorrelation - 0.5).abs() < 1e-14);
    }

    #[test]
    fn degenerate_matrix_statistics() {
        let mut p = Array2::zeros((4, 4));
        p[(0, 0)] = 1.0;
        let s = glcm_statistics(&Glcm { p, valid_pairs: 1 });
        assert_eq!(s.contrast, 0.0);
        assert_eq!(s.energy, 1.0);
        assert_eq!(s.max_probability, 1.0);
        assert_eq!(s.correlation, 0.0); // zero-variance fallback
        assert_eq!(s, GlcmStats::DEGENERATE);
    }

    #[test]
    fn identity_diagonal_matrix() {
        let n = 4;
        let mut p = Array2::zeros((n, n));
        for i in 0..n {
            p[(i, i)] = 1.0 / n as f64;
        }
        let s = glcm_statistics(&Glcm { p, valid_pairs: 8 });
        assert_eq!(s.contrast, 0.0);
        assert!((s.homogeneity - 1.0).abs() < 1e-14);
    }

    #[test]
    fn feature_vector_is_total_and_named() {
        let image = Array2::from_shape_fn((24, 24), |(y, x)| ((x * 7 + y * 13) % 251) as u8);
        let mask = full_mask((24, 24));
        let f = compute_texture_features(&image.view(), &mask.view());
        assert_eq!(f.values.len(), 112);
        assert!(f.values.iter().all(|v| v.is_finite()));
        assert_eq!(texture_feature_names()[0], "contrast_L4_D1_A0");
        assert_eq!(texture_feature_names()[111], "homogeneity_L16_D5_A135");
    }

    #[test]
    fn constant_lesion_is_all_energy_no_contrast() {
        let image = Array2::from_elem((20, 20), 130u8);
        let mask = full_mask((20, 20));
        let f = compute_texture_features(&image.view(), &mask.view());
        for (name, value) in texture_feature_names().iter().zip(&f.values) {
            if name.starts_with("energy") {
                assert_eq!(*value, 1.0, "{name}");
            }
            if name.starts_with("contrast") {
                assert_eq!(*value, 0.0, "{name}");
            }
        }
    }

    #[test]
    fn checkerboard_maximizes_short_range_contrast() {
        let image = Array2::from_shape_fn((16, 16), |(y, x)| if (x + y) % 2 == 0 { 40 } else { 200 });
        let mask = full_mask((16, 16));
        let f = compute_texture_features(&image.view(), &mask.view());
        // two intensity values quantize to the extreme bins
        assert_eq!(f.get("contrast_L4_D1_A0").unwrap(), 9.0);
        assert_eq!(f.get("contrast_L16_D1_A0").unwrap(), 225.0);
    }

    #[test]
    fn intensity_shift_leaves_features_unchanged() {
        let image = Array2::from_shape_fn((18, 18), |(y, x)| ((x * 5 + y * 11) % 180) as u8);
        let shifted = image.mapv(|v| v + 40);
        let mask = full_mask((18, 18));
        let f1 = compute_texture_features(&image.view(), &mask.view());
        let f2 = compute_texture_features(&shifted.view(), &mask.view());
        assert_eq!(f1, f2);
    }

    /// O(n^2) pair-counting oracle, independent of the sweep in
    /// `compute_glcm`: enumerates every ordered pixel pair and checks the
    /// offset directly.
    pub(crate) fn brute_force_glcm(
        q: &Array2<u8>,
        mask: &Array2<u8>,
        spec: &GlcmSpec,
    ) -> Option<(Array2<f64>, usize)> {
        let (h, w) = q.dim();
        let (dx, dy) = spec.offset();
        let mut counts = Array2::<f64>::zeros((spec.levels, spec.levels));
        let mut pairs = 0usize;
        for y1 in 0..h {
            for x1 in 0..w {
                for y2 in 0..h {
                    for x2 in 0..w {
                        if mask[(y1, x1)] == 0 || mask[(y2, x2)] == 0 {
                            continue;
                        }
                        if x2 as i32 - x1 as i32 == dx && y2 as i32 - y1 as i32 == dy {
                            counts[(q[(y1, x1)] as usize, q[(y2, x2)] as usize)] += 1.0;
                            counts[(q[(y2, x2)] as usize, q[(y1, x1)] as usize)] += 1.0;
                            pairs += 1;
                        }
                    }
                }
            }
        }
        if pairs == 0 {
            return None;
        }
        counts.mapv_inplace(|c| c / (2.0 * pairs as f64));
        Some((counts, pairs))
    }

    proptest::proptest! {
        #[test]
        fn glcm_is_symmetric_normalized_and_matches_brute_force(
            seed in 0u64..500,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let image = Array2::from_shape_fn((8, 8), |_| rng.gen::<u8>());
            let mask = Array2::from_shape_fn((8, 8), |_| u8::from(rng.gen_bool(0.8)));
            for spec in all_specs() {
                let q = quantize(&image.view(), &mask.view(), spec.levels);
                let ours = compute_glcm(&q.view(), &mask.view(), &spec);
                let oracle = brute_force_glcm(&q, &mask, &spec);
                match (ours, oracle) {
                    (Ok(glcm), Some((expected, pairs))) => {
                        proptest::prop_assert_eq!(glcm.valid_pairs, pairs);
                        proptest::prop_assert_eq!(&glcm.p, &expected);
                        proptest::prop_assert_eq!(&glcm.p, &glcm.p.t().to_owned());
                        let total: f64 = glcm.p.iter().sum();
                        proptest::prop_assert!((total - 1.0).abs() < 1e-12);
                    }
                    (Err(_), None) => {}
                    (ours, oracle) => {
                        return Err(proptest::test_runner::TestCaseError::fail(
                            format!("disagreement: ours ok={}, oracle some={}", ours.is_ok(), oracle.is_some())));
                    }
                }
            }
        }

        #[test]
        fn transpose_duality_holds(seed in 0u64..200) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let image = Array2::from_shape_fn((10, 7), |_| rng.gen::<u8>());
            let mask = Array2::from_shape_fn((10, 7), |_| u8::from(rng.gen_bool(0.9)));
            let transposed_img = image.t().to_owned();
            let transposed_mask = mask.t().to_owned();
            for levels in GLCM_LEVELS {
                let q = quantize(&image.view(), &mask.view(), levels);
                let qt = quantize(&transposed_img.view(), &transposed_mask.view(), levels);
                let s0 = GlcmSpec { levels, distance: 1, angle: 0 };
                let s90 = GlcmSpec { levels, distance: 1, angle: 90 };
                let a = compute_glcm(&q.view(), &mask.view(), &s0);
                let b = compute_glcm(&qt.view(), &transposed_mask.view(), &s90);
                match (a, b) {
                    (Ok(a), Ok(b)) => proptest::prop_assert_eq!(a.p, b.p),
                    (Err(_), Err(_)) => {}
                    _ => return Err(proptest::test_runner::TestCaseError::fail("duality mismatch")),
                }
            }
        }
    }
}
