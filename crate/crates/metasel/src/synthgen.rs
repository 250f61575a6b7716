//! Deterministic synthetic lesion generator with independently controllable
//! shape and texture cues.
//!
//! Malignant samples get spiculated star-like contours and coarse
//! high-contrast interior speckle; benign samples get smooth ellipses and
//! fine homogeneous speckle. Two independent corruptions mimic the clinical
//! failure modes: a shadowing artifact (the mask boundary is smoothed and
//! dilated, erasing the shape cue, and a cone below the lesion is darkened
//! so the corruption is visible in the image), and multiplicative speckle
//! noise (erasing the texture cue). Corruption flags are drawn independently
//! of the class and recorded in a sidecar `truth_tags.csv` that the pipeline
//! never reads.
//!
//! Every sample is generated from its own RNG stream keyed by (seed, index),
//! so datasets are bit-reproducible and samples can be generated in
//! parallel or individually.

use std::f64::consts::{PI, TAU};
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataio::{ImageSample, Label, Manifest, ManifestRow, write_pgm};
use crate::error::{Error, Result};

/// Generator configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenConfig {
    pub count: usize,
    pub image_size: usize,
    /// Fraction of malignant samples, spread evenly over the index range.
    pub malignant_fraction: f64,
    /// 0 = shape is uninformative, 1 = fully informative.
    pub shape_cue_strength: f64,
    /// 0 = texture is uninformative, 1 = fully informative.
    pub texture_cue_strength: f64,
    /// Probability that a sample is corrupted by a shadowing artifact.
    pub p_shadow: f64,
    /// Probability that a sample is corrupted by multiplicative noise.
    pub p_noise: f64,
    pub seed: u64,
    /// Samples cycle through `source_count` synthetic source tags.
    pub source_count: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            count: 400,
            image_size: 128,
            malignant_fraction: 0.5,
            shape_cue_strength: 1.0,
            texture_cue_strength: 1.0,
            p_shadow: 0.3,
            p_noise: 0.3,
            seed: 42,
            source_count: 1,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.count < 8 {
            return Err(Error::Config(format!(
                "count must be at least 8, got {}",
                self.count
            )));
        }
        if self.image_size < 48 {
            return Err(Error::Config(format!(
                "image size must be at least 48, got {}",
                self.image_size
            )));
        }
        if self.source_count == 0 {
            return Err(Error::Config("source_count must be positive".into()));
        }
        for (name, v) in [
            ("malignant_fraction", self.malignant_fraction),
            ("shape_cue_strength", self.shape_cue_strength),
            ("texture_cue_strength", self.texture_cue_strength),
            ("p_shadow", self.p_shadow),
            ("p_noise", self.p_noise),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        Ok(())
    }

    fn malignant_count(&self) -> usize {
        (self.count as f64 * self.malignant_fraction).round() as usize
    }

    /// Deterministic even spread of malignant labels over the index range.
    fn label_of(&self, index: usize) -> Label {
        let n_mal = self.malignant_count();
        let lo = index * n_mal / self.count;
        let hi = (index + 1) * n_mal / self.count;
        if hi > lo {
            Label::Malignant
        } else {
            Label::Benign
        }
    }
}

/// Ground-truth corruption tags, written to the sidecar CSV for tests only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleTags {
    pub shadowed: bool,
    pub noisy: bool,
}

fn sample_id(index: usize) -> String {
    format!("s{index:05}")
}

/// Generate one sample from its own (seed, index) RNG stream.
pub fn generate_sample(config: &GenConfig, index: usize) -> Result<(ImageSample, SampleTags)> {
    generate_with_flags(config, index, None)
}

/// Generate the clean and shadowed versions of the same underlying sample
/// (identical geometry and texture; only the corruption differs).
pub fn generate_twin_pair(
    config: &GenConfig,
    index: usize,
) -> Result<(ImageSample, ImageSample)> {
    let (clean, _) = generate_with_flags(config, index, Some((false, false)))?;
    let (shadowed, _) = generate_with_flags(config, index, Some((true, false)))?;
    Ok((clean, shadowed))
}

/// Generate the whole dataset in memory (parallel across samples).
pub fn generate_samples(config: &GenConfig) -> Result<Vec<(ImageSample, SampleTags)>> {
    config.validate()?;
    (0..config.count)
        .into_par_iter()
        .map(|i| generate_sample(config, i))
        .collect()
}

/// Generate and write the dataset: `images/*.pgm`, `masks/*.pgm`,
/// `manifest.csv`, and the test-only `truth_tags.csv`.
pub fn generate(config: &GenConfig, out_dir: &Path) -> Result<Manifest> {
    let samples = generate_samples(config)?;
    let images_dir = out_dir.join("images");
    let masks_dir = out_dir.join("masks");
    std::fs::create_dir_all(&images_dir).map_err(|e| Error::io(&images_dir, e))?;
    std::fs::create_dir_all(&masks_dir).map_err(|e| Error::io(&masks_dir, e))?;

    let mut rows = Vec::with_capacity(samples.len());
    let mut tags_csv = String::from("id,shadowed,noisy\n");
    for (sample, tags) in &samples {
        let image_rel = format!("images/{}.pgm", sample.id);
        let mask_rel = format!("masks/{}.pgm", sample.id);
        write_pgm(&out_dir.join(&image_rel), &sample.image)?;
        write_pgm(
            &out_dir.join(&mask_rel),
            &sample.mask.mapv(|v| v * 255),
        )?;
        rows.push(ManifestRow {
            id: sample.id.clone(),
            image_path: image_rel.into(),
            mask_path: mask_rel.into(),
            label: sample.label,
            source: sample.source.clone(),
        });
        tags_csv.push_str(&format!(
            "{},{},{}\n",
            sample.id,
            u8::from(tags.shadowed),
            u8::from(tags.noisy)
        ));
    }

    let manifest = Manifest::from_rows(rows, out_dir.to_path_buf());
    manifest.save(&out_dir.join("manifest.csv"))?;
    let tags_path = out_dir.join("truth_tags.csv");
    std::fs::write(&tags_path, tags_csv).map_err(|e| Error::io(&tags_path, e))?;
    Ok(manifest)
}

fn generate_with_flags(
    config: &GenConfig,
    index: usize,
    force_flags: Option<(bool, bool)>,
) -> Result<(ImageSample, SampleTags)> {
    config.validate()?;
    if index >= config.count {
        return Err(Error::Config(format!(
            "sample index {index} out of range (count {})",
            config.count
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64 + 1);

    let label = config.label_of(index);
    let malignant = label == Label::Malignant;
    let drawn_shadow = rng.gen_bool(config.p_shadow);
    let drawn_noise = rng.gen_bool(config.p_noise);
    let (shadowed, noisy) = force_flags.unwrap_or((drawn_shadow, drawn_noise));

    let s = config.image_size;
    let sf = s as f64;

    // lesion contour: ellipse + gentle lobes, plus cue-scaled spiculation
    let r0 = sf * (0.13 + 0.07 * rng.gen::<f64>());
    let cx = sf * (0.5 + 0.12 * (rng.gen::<f64>() - 0.5));
    let cy = sf * (0.42 + 0.12 * (rng.gen::<f64>() - 0.5));
    let ecc = 0.25 * rng.gen::<f64>();
    let phi0 = PI * rng.gen::<f64>();
    let lobe_amp = 0.05 * rng.gen::<f64>();
    let lobe_k = rng.gen_range(2..5) as f64;
    let lobe_phase = TAU * rng.gen::<f64>();
    let spike_amp = config.shape_cue_strength
        * if malignant {
            0.18 + 0.10 * rng.gen::<f64>()
        } else {
            0.02 * rng.gen::<f64>()
        };
    let spike_k = rng.gen_range(9..15) as f64;
    let spike_phase = TAU * rng.gen::<f64>();
    let spike2_k = spike_k + rng.gen_range(3..7) as f64;
    let spike2_phase = TAU * rng.gen::<f64>();

    let radius_at = |phi: f64| -> f64 {
        let base = r0 * (1.0 + ecc * (2.0 * (phi - phi0)).cos());
        let wobble = 1.0
            + lobe_amp * (lobe_k * phi + lobe_phase).sin()
            + spike_amp * (spike_k * phi + spike_phase).sin()
            + 0.5 * spike_amp * (spike2_k * phi + spike2_phase).sin();
        (base * wobble).max(4.0)
    };

    let mut mask = Array2::<u8>::zeros((s, s));
    for y in 0..s {
        for x in 0..s {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            if dx.hypot(dy) <= radius_at(dy.atan2(dx)) {
                mask[(y, x)] = 1;
            }
        }
    }

    // interior speckle: class-dependent amplitude and correlation length,
    // both collapsing to the benign values as the texture cue goes to 0
    let texture_boost = config.texture_cue_strength
        * if malignant {
            14.0 + 8.0 * rng.gen::<f64>()
        } else {
            0.0
        };
    let corr_boost = config.texture_cue_strength
        * if malignant {
            2.6 + 1.2 * rng.gen::<f64>()
        } else {
            0.0
        };
    let lesion_amp = 9.0 + texture_boost;
    let lesion_corr = 1.2 + corr_boost;

    let bg_field = smooth_noise(&mut rng, s, 1.5);
    let lesion_field = smooth_noise(&mut rng, s, lesion_corr);

    let mut image = Array2::<f64>::zeros((s, s));
    for y in 0..s {
        for x in 0..s {
            image[(y, x)] = if mask[(y, x)] != 0 {
                95.0 + lesion_amp * lesion_field[(y, x)]
            } else {
                let gradient = -8.0 + 16.0 * y as f64 / sf;
                150.0 + gradient + 10.0 * bg_field[(y, x)]
            };
        }
    }
    // soften the background approach to the lesion; interior stays crisp
    let blurred = box_blur(&image, 1, 1);
    for ((y, x), m) in mask.indexed_iter() {
        if *m == 0 {
            image[(y, x)] = blurred[(y, x)];
        }
    }

    if shadowed {
        apply_shadow(&mut image, &mut mask);
    }
    if noisy {
        let mut normal = BoxMuller::default();
        for v in image.iter_mut() {
            *v *= 1.0 + 0.45 * normal.sample(&mut rng);
        }
    }

    let image_u8 = image.mapv(|v| v.round().clamp(0.0, 255.0) as u8);
    let source = format!("synth{}", index % config.source_count);
    let sample = ImageSample::new(sample_id(index), image_u8, mask, label, source)?;
    Ok((
        sample,
        SampleTags {
            shadowed,
            noisy,
        },
    ))
}

/// Shadowing artifact: smooth + dilate the mask boundary (erasing
/// spiculation) and darken a widening cone below the lesion plus the
/// lesion's own lower band.
fn apply_shadow(image: &mut Array2<f64>, mask: &mut Array2<u8>) {
    let (h, w) = image.dim();

    // mask corruption: blur, re-threshold, dilate
    let mask_f = mask.mapv(|v| v as f64);
    let smoothed = box_blur(&mask_f, 5, 2);
    let rethresholded = smoothed.mapv(|v| u8::from(v >= 0.45));
    *mask = dilate(&rethresholded, 2);

    // extent of the corrupted mask
    let (mut x0, mut x1, mut y0, mut y1) = (w, 0usize, h, 0usize);
    for ((y, x), &m) in mask.indexed_iter() {
        if m != 0 {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
    }
    if x0 > x1 {
        return; // cannot happen for valid masks
    }

    // darken the lesion's lower band (ill-defined lower border)
    let band_top = y0 + (y1 - y0) * 3 / 5;
    for y in band_top..=y1 {
        for x in 0..w {
            if mask[(y, x)] != 0 {
                let depth = (y - band_top) as f64 / ((y1 - band_top).max(1)) as f64;
                image[(y, x)] *= 1.0 - 0.25 * depth;
            }
        }
    }

    // darken a widening cone below the lesion
    for y in (y1 + 1)..h {
        let depth = (y - y1) as f64;
        let widen = (depth / 3.0) as usize;
        let lo = x0.saturating_sub(widen);
        let hi = (x1 + widen).min(w - 1);
        let vertical = (depth / 4.0).min(1.0); // ramp in over 4 rows
        for x in lo..=hi {
            // 3-px feather at the cone's column edges
            let edge = ((x - lo).min(hi - x) as f64 / 3.0).min(1.0);
            let strength = 0.55 * vertical * edge;
            image[(y, x)] *= 1.0 - strength;
        }
    }
}

/// Chebyshev dilation by `radius`.
fn dilate(mask: &Array2<u8>, radius: i64) -> Array2<u8> {
    let (h, w) = mask.dim();
    Array2::from_shape_fn((h, w), |(y, x)| {
        for dy in -radius..=radius {
            for dx in -radius..=radius {
                let ny = y as i64 + dy;
                let nx = x as i64 + dx;
                if ny >= 0 && nx >= 0 && ny < h as i64 && nx < w as i64
                    && mask[(ny as usize, nx as usize)] != 0
                {
                    return 1;
                }
            }
        }
        0
    })
}

/// Zero-mean unit-variance smoothed noise field; the blur radius sets the
/// correlation length.
fn smooth_noise<R: Rng>(rng: &mut R, size: usize, corr_len: f64) -> Array2<f64> {
    let raw = Array2::from_shape_fn((size, size), |_| rng.gen_range(-1.0..1.0f64));
    let radius = corr_len.round().max(1.0) as usize;
    let mut field = box_blur(&raw, radius, 2);
    let n = (size * size) as f64;
    let mean = field.iter().sum::<f64>() / n;
    let var = field.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-12);
    field.mapv_inplace(|v| (v - mean) / std);
    field
}

/// Separable box blur with edge clamping.
fn box_blur(field: &Array2<f64>, radius: usize, passes: usize) -> Array2<f64> {
    let (h, w) = field.dim();
    let r = radius as i64;
    let mut current = field.clone();
    for _ in 0..passes {
        // horizontal
        let mut tmp = Array2::<f64>::zeros((h, w));
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for dx in -r..=r {
                    let nx = (x as i64 + dx).clamp(0, w as i64 - 1) as usize;
                    acc += current[(y, nx)];
                }
                tmp[(y, x)] = acc / (2 * r + 1) as f64;
            }
        }
        // vertical
        let mut out = Array2::<f64>::zeros((h, w));
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for dy in -r..=r {
                    let ny = (y as i64 + dy).clamp(0, h as i64 - 1) as usize;
                    acc += tmp[(ny, x)];
                }
                out[(y, x)] = acc / (2 * r + 1) as f64;
            }
        }
        current = out;
    }
    current
}

#[derive(Default)]
struct BoxMuller {
    spare: Option<f64>,
}

impl BoxMuller {
    fn sample<R: Rng>(&mut self, rng: &mut R) -> f64 {
        if let Some(v) = self.spare.take() {
            return v;
        }
        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = TAU * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metalearn::make_meta_input;

    fn small_config() -> GenConfig {
        GenConfig {
            count: 24,
            image_size: 96,
            ..Default::default()
        }
    }

    #[test]
    fn count_below_eight_rejected() {
        let config = GenConfig {
            count: 4,
            ..Default::default()
        };
        let err = config.validate().unwrap_err();
        assert!(err.to_string().contains("at least 8"));
    }

    #[test]
    fn generation_is_deterministic() {
        let config = small_config();
        let a = generate_samples(&config).unwrap();
        let b = generate_samples(&config).unwrap();
        for ((sa, ta), (sb, tb)) in a.iter().zip(&b) {
            assert_eq!(sa.image, sb.image);
            assert_eq!(sa.mask, sb.mask);
            assert_eq!(ta, tb);
        }
    }

    #[test]
    fn all_samples_satisfy_mask_invariants() {
        // construction goes through ImageSample::new, so Ok means valid
        let samples = generate_samples(&small_config()).unwrap();
        assert_eq!(samples.len(), 24);
        for (s, _) in &samples {
            assert!(s.mask_area() >= 32);
        }
        let malignant = samples
            .iter()
            .filter(|(s, _)| s.label == Label::Malignant)
            .count();
        assert_eq!(malignant, 12);
    }

    #[test]
    fn files_round_trip_through_the_loader() {
        let dir = tempfile::tempdir().unwrap();
        let config = GenConfig {
            count: 8,
            image_size: 64,
            source_count: 2,
            ..Default::default()
        };
        let manifest = generate(&config, dir.path()).unwrap();
        assert_eq!(manifest.len(), 8);
        assert!(dir.path().join("truth_tags.csv").exists());

        let reloaded = Manifest::load(&dir.path().join("manifest.csv")).unwrap();
        for (row, (expected, _)) in reloaded.rows().iter().zip(
            (0..8).map(|i| generate_sample(&config, i).unwrap()),
        ) {
            let loaded = crate::dataio::load_sample(&reloaded, row).unwrap();
            assert_eq!(loaded.image, expected.image);
            assert_eq!(loaded.mask, expected.mask);
            assert_eq!(loaded.label, expected.label);
        }
    }

    #[test]
    fn written_datasets_are_byte_identical_across_runs() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let config = GenConfig {
            count: 10,
            image_size: 64,
            seed: 7,
            ..Default::default()
        };
        generate(&config, d1.path()).unwrap();
        generate(&config, d2.path()).unwrap();
        for rel in ["manifest.csv", "truth_tags.csv", "images/s00003.pgm", "masks/s00007.pgm"] {
            let a = std::fs::read(d1.path().join(rel)).unwrap();
            let b = std::fs::read(d2.path().join(rel)).unwrap();
            assert_eq!(a, b, "{rel} differs");
        }
    }

    #[test]
    fn corruption_flags_are_independent_of_class() {
        let config = GenConfig {
            count: 480,
            image_size: 64,
            ..Default::default()
        };
        let samples = generate_samples(&config).unwrap();
        let n = samples.len() as f64;
        let p_mal = samples
            .iter()
            .filter(|(s, _)| s.label == Label::Malignant)
            .count() as f64
            / n;
        for (name, get) in [
            ("shadow", Box::new(|t: &SampleTags| t.shadowed) as Box<dyn Fn(&SampleTags) -> bool>),
            ("noise", Box::new(|t: &SampleTags| t.noisy)),
        ] {
            let p_flag = samples.iter().filter(|(_, t)| get(t)).count() as f64 / n;
            let joint = samples
                .iter()
                .filter(|(s, t)| s.label == Label::Malignant && get(t))
                .count() as f64
                / n;
            assert!(
                (joint - p_mal * p_flag).abs() <= 0.05,
                "{name}: joint {joint:.3} vs product {:.3}",
                p_mal * p_flag
            );
        }
    }

    #[test]
    fn shadowed_twin_scores_higher_on_the_shadow_descriptor() {
        let config = GenConfig {
            count: 40,
            image_size: 96,
            ..Default::default()
        };
        for index in 0..20 {
            let (clean, shadowed) = generate_twin_pair(&config, index).unwrap();
            assert_eq!(clean.label, shadowed.label);
            let d_clean = make_meta_input(&clean, 32).descriptors[1];
            let d_shadow = make_meta_input(&shadowed, 32).descriptors[1];
            assert!(
                d_shadow > d_clean,
                "sample {index}: shadowed {d_shadow} <= clean {d_clean}"
            );
        }
    }

    #[test]
    fn spiculation_separates_the_classes_morphologically() {
        let config = GenConfig {
            count: 40,
            image_size: 96,
            p_shadow: 0.0,
            p_noise: 0.0,
            ..Default::default()
        };
        let samples = generate_samples(&config).unwrap();
        let mut benign_conv = Vec::new();
        let mut malignant_conv = Vec::new();
        for (s, _) in &samples {
            let f = crate::morphology::morph_features(&s.mask.view()).unwrap();
            match s.label {
                Label::Benign => benign_conv.push(f.convexity),
                Label::Malignant => malignant_conv.push(f.convexity),
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(
            mean(&benign_conv) > mean(&malignant_conv) + 0.1,
            "benign {} vs malignant {}",
            mean(&benign_conv),
            mean(&malignant_conv)
        );
    }
}
