//! Per-sample feature extraction shared by the CLI and the harness.

use crate::dataio::{ImageSample, Label};
use crate::error::{Error, Result};
use crate::morphology::{self, MORPH_FEATURE_NAMES};
use crate::texture::{self, texture_feature_names};

/// Both feature families for one sample.
#[derive(Debug, Clone)]
pub struct FeatureRecord {
    pub id: String,
    pub label: Label,
    pub source: String,
    /// 15 morphological features in export order.
    pub morph: Vec<f64>,
    /// 112 texture features in export order.
    pub texture: Vec<f64>,
}

/// Extract the morphological and texture feature vectors of a sample.
pub fn extract_features(sample: &ImageSample) -> Result<FeatureRecord> {
    let morph = morphology::morph_features(&sample.mask.view())
        .map_err(|e| Error::sample(&sample.id, e.to_string()))?
        .to_vec();
    let texture =
        texture::compute_texture_features(&sample.image.view(), &sample.mask.view()).values;
    Ok(FeatureRecord {
        id: sample.id.clone(),
        label: sample.label,
        source: sample.source.clone(),
        morph,
        texture,
    })
}

pub fn morph_feature_names() -> Vec<String> {
    MORPH_FEATURE_NAMES.iter().map(|s| s.to_string()).collect()
}

pub fn texture_feature_names_owned() -> Vec<String> {
    texture_feature_names().to_vec()
}
