//! Validated image/mask pairs.

use log::warn;
use ndarray::Array2;

use super::manifest::{Label, Manifest, ManifestRow};
use super::pgm::read_gray;
use crate::error::{Error, Result};

pub const MIN_IMAGE_DIM: usize = 16;
pub const MIN_MASK_AREA: usize = 32;

/// A grayscale lesion image with its binary mask (1 = lesion).
#[derive(Debug, Clone)]
pub struct ImageSample {
    pub id: String,
    pub image: Array2<u8>,
    pub mask: Array2<u8>,
    pub label: Label,
    pub source: String,
}

impl ImageSample {
    /// Validate and normalize a raw image/mask pair: checks dimensions,
    /// binarizes the mask (threshold 128 unless already 0/1 valued), keeps
    /// the largest 8-connected component, and enforces the minimum area.
    pub fn new(
        id: String,
        image: Array2<u8>,
        mask: Array2<u8>,
        label: Label,
        source: String,
    ) -> Result<ImageSample> {
        if image.dim() != mask.dim() {
            return Err(Error::sample(
                &id,
                format!(
                    "image {:?} and mask {:?} dimensions differ",
                    image.dim(),
                    mask.dim()
                ),
            ));
        }
        let (h, w) = image.dim();
        if h < MIN_IMAGE_DIM || w < MIN_IMAGE_DIM {
            return Err(Error::sample(
                &id,
                format!("image {h}x{w} smaller than {MIN_IMAGE_DIM}x{MIN_IMAGE_DIM}"),
            ));
        }

        let binary = binarize(&mask);
        if binary.iter().all(|&v| v == 0) {
            return Err(Error::sample(&id, "empty mask"));
        }
        let (largest, component_count) = largest_component(&binary);
        if component_count > 1 {
            warn!("sample {id}: mask has {component_count} components, keeping the largest");
        }
        let area = largest.iter().filter(|&&v| v == 1).count();
        if area < MIN_MASK_AREA {
            return Err(Error::sample(
                &id,
                format!("largest mask component has {area} px (< {MIN_MASK_AREA})"),
            ));
        }

        Ok(ImageSample {
            id,
            image,
            mask: largest,
            label,
            source,
        })
    }

    pub fn mask_area(&self) -> usize {
        self.mask.iter().filter(|&&v| v == 1).count()
    }
}

/// Load and validate the sample referenced by a manifest row.
pub fn load_sample(manifest: &Manifest, row: &ManifestRow) -> Result<ImageSample> {
    let image = read_gray(&manifest.resolve(&row.image_path))?;
    let mask = read_gray(&manifest.resolve(&row.mask_path))?;
    ImageSample::new(
        row.id.clone(),
        image,
        mask,
        row.label,
        row.source.clone(),
    )
}

fn binarize(mask: &Array2<u8>) -> Array2<u8> {
    if mask.iter().all(|&v| v <= 1) {
        mask.clone()
    } else {
        mask.mapv(|v| u8::from(v >= 128))
    }
}

/// Label 8-connected foreground components and keep only the largest.
/// Returns the cleaned mask and the number of components found.
fn largest_component(mask: &Array2<u8>) -> (Array2<u8>, usize) {
    let (h, w) = mask.dim();
    let mut labels: Array2<u32> = Array2::zeros((h, w));
    let mut sizes: Vec<usize> = vec![0]; // sizes[0] unused (background)
    let mut stack = Vec::new();

    for y in 0..h {
        for x in 0..w {
            if mask[(y, x)] == 0 || labels[(y, x)] != 0 {
                continue;
            }
            let id = sizes.len() as u32;
            sizes.push(0);
            stack.push((y, x));
            labels[(y, x)] = id;
            while let Some((cy, cx)) = stack.pop() {
                sizes[id as usize] += 1;
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        if dy == 0 && dx == 0 {
                            continue;
                        }
                        let ny = cy as i64 + dy;
                        let nx = cx as i64 + dx;
                        if ny < 0 || nx < 0 || ny >= h as i64 || nx >= w as i64 {
                            continue;
                        }
                        let (ny, nx) = (ny as usize, nx as usize);
                        if mask[(ny, nx)] != 0 && labels[(ny, nx)] == 0 {
                            labels[(ny, nx)] = id;
                            stack.push((ny, nx));
                        }
                    }
                }
            }
        }
    }

    let component_count = sizes.len() - 1;
    let best = (1..sizes.len()).max_by_key(|&i| sizes[i]).unwrap_or(0) as u32;
    let cleaned = labels.mapv(|l| u8::from(l == best && best != 0));
    (cleaned, component_count)
}
