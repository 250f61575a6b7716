//! Meta-learning: build per-image reference labels from the two standard
//! classifiers' errors and train a selector that recommends which classifier
//! to apply to each image.

mod convnet;
mod descriptor;

use std::path::Path;

use log::warn;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

pub use convnet::{ConvNet, ConvNetConfig, CHANNELS};
pub use descriptor::{make_meta_input, MetaInput, DESCRIPTOR_NAMES};

use crate::error::{Error, Result};
use crate::features::FeatureRecord;
use crate::linmodel::{FitOptions, LinearModel};

/// The two standard classifiers a selector can recommend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Choice {
    #[serde(rename = "SHAPE")]
    Shape,
    #[serde(rename = "TEXTURE")]
    Texture,
}

impl Choice {
    pub fn as_u8(self) -> u8 {
        match self {
            Choice::Shape => 0,
            Choice::Texture => 1,
        }
    }
}

/// Classification error `e = |p - c|` of a predicted malignancy probability
/// against the true class.
pub fn classification_error(p: f64, c: u8) -> f64 {
    (p - c as f64).abs()
}

/// Reference label for selector training: which classifier erred less on
/// this sample. Ties go to SHAPE.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetaLabel {
    pub id: String,
    pub e_shape: f64,
    pub e_texture: f64,
    pub target: Choice,
    pub tie: bool,
}

const TIE_EPSILON: f64 = 1e-12;

/// Evaluate both development-trained classifiers on meta-training samples
/// and label each sample with the better performer.
pub fn build_meta_labels(
    shape_model: &LinearModel,
    texture_model: &LinearModel,
    samples: &[&FeatureRecord],
) -> Result<Vec<MetaLabel>> {
    samples
        .iter()
        .map(|record| {
            let p_shape = shape_model
                .predict(&record.morph)
                .map_err(|e| Error::sample(&record.id, e.to_string()))?;
            let p_texture = texture_model
                .predict(&record.texture)
                .map_err(|e| Error::sample(&record.id, e.to_string()))?;
            let e_shape = classification_error(p_shape, record.label.as_u8());
            let e_texture = classification_error(p_texture, record.label.as_u8());
            let tie = (e_shape - e_texture).abs() < TIE_EPSILON;
            let target = if !tie && e_texture < e_shape {
                Choice::Texture
            } else {
                Choice::Shape
            };
            Ok(MetaLabel {
                id: record.id.clone(),
                e_shape,
                e_texture,
                target,
                tie,
            })
        })
        .collect()
}

/// Selector backend kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Backend {
    #[serde(rename = "DESCRIPTOR")]
    Descriptor,
    #[serde(rename = "CONVNET")]
    Convnet,
}

impl std::str::FromStr for Backend {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Backend, String> {
        match s.to_ascii_lowercase().as_str() {
            "descriptor" => Ok(Backend::Descriptor),
            "convnet" => Ok(Backend::Convnet),
            other => Err(format!("unknown backend {other:?} (descriptor|convnet)")),
        }
    }
}

/// Selector training configuration.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SelectorConfig {
    pub backend: Backend,
    pub seed: u64,
    /// Adam learning rate (convnet backend).
    pub learning_rate: f64,
    /// Training epochs (convnet backend).
    pub epochs: usize,
    /// L1 strength (descriptor backend).
    pub lambda: f64,
    pub patch_size: usize,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        SelectorConfig {
            backend: Backend::Descriptor,
            seed: 42,
            learning_rate: 1e-4,
            epochs: 200,
            lambda: 0.01,
            patch_size: 64,
        }
    }
}

/// A trained per-image selector.
#[derive(Debug, Clone)]
pub enum MetaSelector {
    /// Degenerate fallback when meta-labels contain a single class.
    Constant { choice: Choice, confidence: f64 },
    /// L1 logistic regression on the 6 appearance descriptors.
    Descriptor(LinearModel),
    /// Small convolutional network on the lesion patch.
    Convnet(ConvNet),
}

impl MetaSelector {
    pub fn backend_name(&self) -> &'static str {
        match self {
            MetaSelector::Constant { .. } => "CONSTANT",
            MetaSelector::Descriptor(_) => "DESCRIPTOR",
            MetaSelector::Convnet(_) => "CONVNET",
        }
    }
}

/// Train the selector on meta-labels. Falls back to a constant selector
/// (majority target, confidence just off 0.5) when only one class occurs.
pub fn train_selector(
    labels: &[MetaLabel],
    inputs: &[MetaInput],
    config: &SelectorConfig,
) -> Result<MetaSelector> {
    if labels.is_empty() || labels.len() != inputs.len() {
        return Err(Error::Selector(format!(
            "got {} labels and {} inputs",
            labels.len(),
            inputs.len()
        )));
    }
    let targets: Vec<u8> = labels.iter().map(|l| l.target.as_u8()).collect();
    let texture_count = targets.iter().filter(|&&t| t == 1).count();

    if texture_count == 0 || texture_count == targets.len() {
        let choice = if texture_count == 0 {
            Choice::Shape
        } else {
            Choice::Texture
        };
        warn!(
            "meta-labels are single-class; falling back to a constant {choice:?} selector"
        );
        let confidence = match choice {
            Choice::Shape => 0.5 - 1e-6,
            Choice::Texture => 0.5 + 1e-6,
        };
        return Ok(MetaSelector::Constant { choice, confidence });
    }

    match config.backend {
        Backend::Descriptor => {
            let n = inputs.len();
            let x = Array2::from_shape_fn((n, DESCRIPTOR_NAMES.len()), |(i, j)| {
                inputs[i].descriptors[j]
            });
            let names = DESCRIPTOR_NAMES.iter().map(|s| s.to_string()).collect();
            let model = LinearModel::fit(
                &x.view(),
                &targets,
                names,
                &FitOptions::with_lambda(config.lambda),
            )?;
            Ok(MetaSelector::Descriptor(model))
        }
        Backend::Convnet => {
            let patches: Vec<Array2<f64>> =
                inputs.iter().map(|i| i.patch.clone()).collect();
            let (net, _) = ConvNet::train(
                &patches,
                &targets,
                ConvNetConfig {
                    patch_size: config.patch_size,
                    seed: config.seed,
                    learning_rate: config.learning_rate,
                    epochs: config.epochs,
                },
            )?;
            Ok(MetaSelector::Convnet(net))
        }
    }
}

/// Recommend a classifier for one input. The confidence is the probability
/// of TEXTURE; exactly 0.5 resolves to SHAPE.
pub fn recommend(selector: &MetaSelector, input: &MetaInput) -> Result<(Choice, f64)> {
    let confidence = match selector {
        MetaSelector::Constant { confidence, .. } => *confidence,
        MetaSelector::Descriptor(model) => model.predict(&input.descriptors)?,
        MetaSelector::Convnet(net) => net.predict(&input.patch),
    };
    let choice = if confidence > 0.5 {
        Choice::Texture
    } else {
        Choice::Shape
    };
    Ok((choice, confidence))
}

/// Route one sample through the recommended classifier.
pub fn select_and_predict(
    selector: &MetaSelector,
    shape_model: &LinearModel,
    texture_model: &LinearModel,
    record: &FeatureRecord,
    input: &MetaInput,
) -> Result<(f64, Choice)> {
    let (choice, _) = recommend(selector, input)?;
    let p = match choice {
        Choice::Shape => shape_model.predict(&record.morph)?,
        Choice::Texture => texture_model.predict(&record.texture)?,
    };
    Ok((p, choice))
}

#[derive(Serialize, Deserialize)]
struct DescriptorFile {
    backend: String,
    descriptor_names: Vec<String>,
    model: LinearModel,
}

#[derive(Serialize, Deserialize)]
struct ConstantFile {
    backend: String,
    choice: Choice,
    confidence: f64,
}

impl MetaSelector {
    /// Save to disk: JSON for the constant and descriptor backends, a JSON
    /// header plus little-endian f32 parameter blob for the convnet.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = match self {
            MetaSelector::Constant { choice, confidence } => serde_json::to_vec_pretty(
                &ConstantFile {
                    backend: "CONSTANT".into(),
                    choice: *choice,
                    confidence: *confidence,
                },
            )?,
            MetaSelector::Descriptor(model) => serde_json::to_vec_pretty(&DescriptorFile {
                backend: "DESCRIPTOR".into(),
                descriptor_names: DESCRIPTOR_NAMES.iter().map(|s| s.to_string()).collect(),
                model: model.clone(),
            })?,
            MetaSelector::Convnet(net) => net.to_blob(),
        };
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<MetaSelector> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let header_end = bytes
            .iter()
            .position(|&b| b == b'\n')
            .unwrap_or(bytes.len());
        let head: serde_json::Value = match serde_json::from_slice(&bytes) {
            Ok(v) => v,
            Err(_) => serde_json::from_slice(&bytes[..header_end])?,
        };
        match head["backend"].as_str() {
            Some("CONSTANT") => {
                let f: ConstantFile = serde_json::from_slice(&bytes)?;
                Ok(MetaSelector::Constant {
                    choice: f.choice,
                    confidence: f.confidence,
                })
            }
            Some("DESCRIPTOR") => {
                let f: DescriptorFile = serde_json::from_slice(&bytes)?;
                Ok(MetaSelector::Descriptor(f.model))
            }
            Some("CONVNET") => Ok(MetaSelector::Convnet(ConvNet::from_blob(&bytes)?)),
            other => Err(Error::Selector(format!("unknown selector backend {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::Label;
    use crate::linmodel::RobustScaler;

    #[test]
    fn classification_error_examples() {
        assert!((classification_error(0.9, 1) - 0.1).abs() < 1e-15);
        assert!((classification_error(0.9, 0) - 0.9).abs() < 1e-15);
        assert!((classification_error(0.5, 0) - 0.5).abs() < 1e-15);
        assert!((classification_error(0.5, 1) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn classification_error_is_symmetric_under_flip() {
        for p in [0.0, 0.12, 0.5, 0.77, 1.0] {
            for c in [0u8, 1] {
                let a = classification_error(p, c);
                let b = classification_error(1.0 - p, 1 - c);
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    fn fixed_model(weight: f64, bias: f64, dim: usize) -> LinearModel {
        LinearModel {
            feature_names: (0..dim).map(|i| format!("f{i}")).collect(),
            weights: {
                let mut w = vec![0.0; dim];
                w[0] = weight;
                w
            },
            bias,
            lambda: 0.0,
            class_weights: (1.0, 1.0),
            scaler: RobustScaler::identity(dim),
        }
    }

    fn record(id: &str, label: u8, morph0: f64, texture0: f64) -> FeatureRecord {
        let mut morph = vec![0.0; 15];
        morph[0] = morph0;
        let mut texture = vec![0.0; 112];
        texture[0] = texture0;
        FeatureRecord {
            id: id.into(),
            label: Label::from_u8(label).unwrap(),
            source: "t".into(),
            morph,
            texture,
        }
    }

    #[test]
    fn meta_labels_pick_the_argmin_with_shape_ties() {
        let shape = fixed_model(1.0, 0.0, 15);
        let texture = fixed_model(1.0, 0.0, 112);
        // label 1: shape input 2.0 -> p ~ 0.88 (e ~ 0.12); texture input 0.5 -> p ~ 0.62 (e ~ 0.38)
        let a = record("a", 1, 2.0, 0.5);
        // label 1: shape errs more
        let b = record("b", 1, 0.5, 2.0);
        // identical inputs -> exact tie
        let c = record("c", 0, 1.0, 1.0);
        let records = [&a, &b, &c];
        let labels = build_meta_labels(&shape, &texture, &records).unwrap();
        assert_eq!(labels[0].target, Choice::Shape);
        assert!(!labels[0].tie);
        assert_eq!(labels[1].target, Choice::Texture);
        assert_eq!(labels[2].target, Choice::Shape);
        assert!(labels[2].tie);
        for l in &labels {
            let expected = if l.tie || l.e_shape <= l.e_texture {
                Choice::Shape
            } else {
                Choice::Texture
            };
            assert_eq!(l.target, expected);
        }
    }

    fn constant_input(value: f64, descriptors: [f64; 6]) -> MetaInput {
        MetaInput {
            patch: Array2::from_elem((16, 16), value),
            descriptors,
        }
    }

    fn label(id: &str, target: Choice) -> MetaLabel {
        MetaLabel {
            id: id.into(),
            e_shape: 0.0,
            e_texture: 0.0,
            target,
            tie: false,
        }
    }

    #[test]
    fn single_class_labels_fall_back_to_constant() {
        let labels: Vec<MetaLabel> = (0..4).map(|i| label(&format!("s{i}"), Choice::Shape)).collect();
        let inputs: Vec<MetaInput> = (0..4).map(|_| constant_input(0.5, [0.0; 6])).collect();
        let sel = train_selector(&labels, &inputs, &SelectorConfig::default()).unwrap();
        match &sel {
            MetaSelector::Constant { choice, confidence } => {
                assert_eq!(*choice, Choice::Shape);
                assert!(*confidence < 0.5);
            }
            other => panic!("expected constant selector, got {other:?}"),
        }
        let (choice, _) = recommend(&sel, &inputs[0]).unwrap();
        assert_eq!(choice, Choice::Shape);
    }

    #[test]
    fn separable_descriptors_reach_perfect_training_accuracy() {
        let mut labels = Vec::new();
        let mut inputs = Vec::new();
        for i in 0..12 {
            let is_texture = i % 2 == 0;
            let mut d = [0.0; 6];
            d[1] = if is_texture { 30.0 + i as f64 } else { -5.0 - i as f64 };
            d[5] = 6.0;
            inputs.push(constant_input(0.5, d));
            labels.push(label(
                &format!("s{i}"),
                if is_texture { Choice::Texture } else { Choice::Shape },
            ));
        }
        let config = SelectorConfig {
            lambda: 1e-4,
            ..Default::default()
        };
        let sel = train_selector(&labels, &inputs, &config).unwrap();
        for (l, i) in labels.iter().zip(&inputs) {
            let (choice, _) = recommend(&sel, i).unwrap();
            assert_eq!(choice, l.target);
        }
    }

    #[test]
    fn zero_weight_descriptor_model_recommends_shape_at_half() {
        let model = fixed_model(0.0, 0.0, 6);
        let sel = MetaSelector::Descriptor(model);
        let (choice, conf) = recommend(&sel, &constant_input(0.3, [1.0; 6])).unwrap();
        assert_eq!(conf, 0.5);
        assert_eq!(choice, Choice::Shape); // tie-to-shape at exactly 0.5
    }

    #[test]
    fn select_and_predict_routes_to_the_chosen_model() {
        let shape = fixed_model(3.0, 0.0, 15);
        let texture = fixed_model(-3.0, 0.0, 112);
        let rec = record("r", 1, 1.0, 1.0);
        let input = constant_input(0.5, [0.0; 6]);

        let always_shape = MetaSelector::Constant {
            choice: Choice::Shape,
            confidence: 0.5 - 1e-6,
        };
        let always_texture = MetaSelector::Constant {
            choice: Choice::Texture,
            confidence: 0.5 + 1e-6,
        };
        let (p_s, c_s) =
            select_and_predict(&always_shape, &shape, &texture, &rec, &input).unwrap();
        let (p_t, c_t) =
            select_and_predict(&always_texture, &shape, &texture, &rec, &input).unwrap();
        assert_eq!(c_s, Choice::Shape);
        assert_eq!(c_t, Choice::Texture);
        assert_eq!(p_s, shape.predict(&rec.morph).unwrap());
        assert_eq!(p_t, texture.predict(&rec.texture).unwrap());
        assert!(p_s > 0.9 && p_t < 0.1);
    }

    #[test]
    fn selector_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();

        let descriptor = MetaSelector::Descriptor(fixed_model(0.5, -0.2, 6));
        let p1 = dir.path().join("descriptor.selector");
        descriptor.save(&p1).unwrap();
        match MetaSelector::load(&p1).unwrap() {
            MetaSelector::Descriptor(m) => assert_eq!(m.weights[0], 0.5),
            other => panic!("wrong backend {other:?}"),
        }

        let constant = MetaSelector::Constant {
            choice: Choice::Texture,
            confidence: 0.5 + 1e-6,
        };
        let p2 = dir.path().join("constant.selector");
        constant.save(&p2).unwrap();
        match MetaSelector::load(&p2).unwrap() {
            MetaSelector::Constant { choice, .. } => assert_eq!(choice, Choice::Texture),
            other => panic!("wrong backend {other:?}"),
        }

        let net = ConvNet::new(ConvNetConfig {
            patch_size: 16,
            ..Default::default()
        })
        .unwrap();
        let convnet = MetaSelector::Convnet(net);
        let p3 = dir.path().join("convnet.selector");
        convnet.save(&p3).unwrap();
        match MetaSelector::load(&p3).unwrap() {
            MetaSelector::Convnet(n) => assert_eq!(n.config.patch_size, 16),
            other => panic!("wrong backend {other:?}"),
        }
    }
}
