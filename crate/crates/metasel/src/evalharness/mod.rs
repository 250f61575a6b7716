//! The nested cross-validation experiment: per fold, fit both standard
//! classifiers on the development half, label the meta-training half with
//! the better performer, train the selector, and evaluate four methods on
//! the test slice — the texture classifier, the morphological classifier,
//! the selector-driven pipeline, and the per-sample oracle upper bound.

mod metrics;
pub mod plots;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use metrics::{accuracy, auc, oracle_select, pearson_correlation};

use crate::dataio::{make_split_plan, ImageSample, Role, SplitItem, SplitPlan};
use crate::error::{Error, Result};
use crate::features::{extract_features, FeatureRecord};
use crate::linmodel::{FitOptions, LinearModel};
use crate::metalearn::{
    build_meta_labels, make_meta_input, recommend, train_selector, Backend, Choice, MetaInput,
    SelectorConfig,
};

/// Experiment configuration, echoed into every report.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub fold_count: usize,
    pub lambda_shape: f64,
    pub lambda_texture: f64,
    pub backend: Backend,
    pub patch_size: usize,
    pub selector_epochs: usize,
    pub selector_learning_rate: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 42,
            fold_count: 8,
            lambda_shape: 0.01,
            lambda_texture: 0.01,
            backend: Backend::Descriptor,
            patch_size: 64,
            selector_epochs: 200,
            selector_learning_rate: 1e-4,
        }
    }
}

/// AUC and accuracy of one method.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MethodMetrics {
    pub auc: f64,
    pub accuracy: f64,
}

/// One value per evaluated method, in the report's fixed order.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PerMethod<T> {
    pub glcm: T,
    pub morphological: T,
    pub meta_learning: T,
    pub oracle: T,
}

impl<T> PerMethod<T> {
    pub fn as_named(&self) -> [(&'static str, &T); 4] {
        [
            ("GLCM", &self.glcm),
            ("Morphological", &self.morphological),
            ("Meta-learning", &self.meta_learning),
            ("Oracle", &self.oracle),
        ]
    }
}

/// Per-test-sample predictions within one fold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub label: u8,
    pub p_shape: f64,
    pub p_texture: f64,
    pub recommendation: Choice,
    pub confidence: f64,
    pub p_meta: f64,
    pub p_oracle: f64,
}

/// One completed fold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub dev_size: usize,
    pub meta_size: usize,
    pub test_size: usize,
    pub selector_backend: String,
    pub methods: PerMethod<MethodMetrics>,
    pub records: Vec<SampleRecord>,
}

/// A fold that aborted, with the failing stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InvalidFold {
    pub fold: usize,
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ChoiceDistribution {
    pub shape: usize,
    pub texture: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub sample_count: usize,
    pub benign: usize,
    pub malignant: usize,
    pub sources: Vec<String>,
}

/// The full experiment output. Serializes deterministically: field order is
/// fixed and all collections are ordered by fold and dataset order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub config: ExperimentConfig,
    pub dataset: DatasetSummary,
    pub folds: Vec<FoldReport>,
    pub invalid_folds: Vec<InvalidFold>,
    /// Metrics over the union of all valid test folds.
    pub pooled: PerMethod<MethodMetrics>,
    /// Mean classification error |p - c| per method, pooled.
    pub pooled_mean_error: PerMethod<f64>,
    /// Correlation between the two standard classifiers' outputs, pooled.
    pub output_correlation: Option<f64>,
    pub selector_distribution: ChoiceDistribution,
}

impl EvaluationReport {
    /// All per-sample records across valid folds, in fold order.
    pub fn all_records(&self) -> impl Iterator<Item = (&FoldReport, &SampleRecord)> {
        self.folds
            .iter()
            .flat_map(|f| f.records.iter().map(move |r| (f, r)))
    }

    pub fn to_json_pretty(&self) -> Result<Vec<u8>> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    /// Flat per-sample CSV of all predictions.
    pub fn predictions_csv(&self) -> String {
        let mut out = String::from(
            "fold,id,label,p_shape,p_texture,recommendation,confidence,p_meta,p_oracle\n",
        );
        for (fold, r) in self.all_records() {
            let rec = match r.recommendation {
                Choice::Shape => "SHAPE",
                Choice::Texture => "TEXTURE",
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                fold.fold,
                r.id,
                r.label,
                r.p_shape,
                r.p_texture,
                rec,
                r.confidence,
                r.p_meta,
                r.p_oracle
            ));
        }
        out
    }
}

/// Everything the harness precomputes once per sample.
struct Prepared {
    records: Vec<FeatureRecord>,
    inputs: Vec<MetaInput>,
}

fn prepare(samples: &[ImageSample], patch_size: usize) -> Result<Prepared> {
    let records: Vec<FeatureRecord> = samples
        .par_iter()
        .map(extract_features)
        .collect::<Result<_>>()?;
    let inputs: Vec<MetaInput> = samples
        .par_iter()
        .map(|s| make_meta_input(s, patch_size))
        .collect();
    Ok(Prepared { records, inputs })
}

fn matrix(records: &[&FeatureRecord], morph: bool) -> Array2<f64> {
    let dim = if morph { 15 } else { 112 };
    Array2::from_shape_fn((records.len(), dim), |(i, j)| {
        if morph {
            records[i].morph[j]
        } else {
            records[i].texture[j]
        }
    })
}

fn splitmix(mut state: u64) -> u64 {
    state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

fn run_fold(
    fold: usize,
    prepared: &Prepared,
    plan: &SplitPlan,
    config: &ExperimentConfig,
) -> std::result::Result<FoldReport, InvalidFold> {
    let fail = |stage: &str, message: String| InvalidFold {
        fold,
        stage: stage.to_string(),
        message,
    };

    let dev_idx = plan.indices(fold, Role::DevTrain);
    let meta_idx = plan.indices(fold, Role::MetaTrain);
    let test_idx = plan.indices(fold, Role::Test);

    let dev: Vec<&FeatureRecord> = dev_idx.iter().map(|&i| &prepared.records[i]).collect();
    let y_dev: Vec<u8> = dev.iter().map(|r| r.label.as_u8()).collect();

    let shape_model = LinearModel::fit(
        &matrix(&dev, true).view(),
        &y_dev,
        crate::features::morph_feature_names(),
        &FitOptions::with_lambda(config.lambda_shape),
    )
    .map_err(|e| fail("fit_shape", e.to_string()))?;

    let texture_model = LinearModel::fit(
        &matrix(&dev, false).view(),
        &y_dev,
        crate::features::texture_feature_names_owned(),
        &FitOptions::with_lambda(config.lambda_texture),
    )
    .map_err(|e| fail("fit_texture", e.to_string()))?;

    let meta_records: Vec<&FeatureRecord> =
        meta_idx.iter().map(|&i| &prepared.records[i]).collect();
    let labels = build_meta_labels(&shape_model, &texture_model, &meta_records)
        .map_err(|e| fail("meta_labels", e.to_string()))?;
    let meta_inputs: Vec<MetaInput> = meta_idx
        .iter()
        .map(|&i| prepared.inputs[i].clone())
        .collect();

    let selector_config = SelectorConfig {
        backend: config.backend,
        seed: splitmix(config.seed ^ fold as u64),
        learning_rate: config.selector_learning_rate,
        epochs: config.selector_epochs,
        lambda: 0.01,
        patch_size: config.patch_size,
    };
    let selector = train_selector(&labels, &meta_inputs, &selector_config)
        .map_err(|e| fail("train_selector", e.to_string()))?;

    let mut records = Vec::with_capacity(test_idx.len());
    for &i in &test_idx {
        let record = &prepared.records[i];
        let input = &prepared.inputs[i];
        let p_shape = shape_model
            .predict(&record.morph)
            .map_err(|e| fail("evaluate", e.to_string()))?;
        let p_texture = texture_model
            .predict(&record.texture)
            .map_err(|e| fail("evaluate", e.to_string()))?;
        let (recommendation, confidence) =
            recommend(&selector, input).map_err(|e| fail("evaluate", e.to_string()))?;
        let p_meta = match recommendation {
            Choice::Shape => p_shape,
            Choice::Texture => p_texture,
        };
        let label = record.label.as_u8();
        records.push(SampleRecord {
            id: record.id.clone(),
            label,
            p_shape,
            p_texture,
            recommendation,
            confidence,
            p_meta,
            p_oracle: oracle_select(p_shape, p_texture, label),
        });
    }

    let refs: Vec<&SampleRecord> = records.iter().collect();
    let methods = method_metrics(&refs).map_err(|e| fail("metrics", e.to_string()))?;

    Ok(FoldReport {
        fold,
        dev_size: dev_idx.len(),
        meta_size: meta_idx.len(),
        test_size: test_idx.len(),
        selector_backend: selector.backend_name().to_string(),
        methods,
        records,
    })
}

fn method_metrics(records: &[&SampleRecord]) -> Result<PerMethod<MethodMetrics>> {
    let labels: Vec<u8> = records.iter().map(|r| r.label).collect();
    let metric = |get: fn(&SampleRecord) -> f64| -> Result<MethodMetrics> {
        let scores: Vec<f64> = records.iter().map(|r| get(r)).collect();
        Ok(MethodMetrics {
            auc: auc(&scores, &labels)?,
            accuracy: accuracy(&scores, &labels),
        })
    };
    Ok(PerMethod {
        glcm: metric(|r| r.p_texture)?,
        morphological: metric(|r| r.p_shape)?,
        meta_learning: metric(|r| r.p_meta)?,
        oracle: metric(|r| r.p_oracle)?,
    })
}

fn mean_errors(records: &[&SampleRecord]) -> PerMethod<f64> {
    let mean = |get: fn(&SampleRecord) -> f64| -> f64 {
        records
            .iter()
            .map(|r| (get(r) - r.label as f64).abs())
            .sum::<f64>()
            / records.len() as f64
    };
    PerMethod {
        glcm: mean(|r| r.p_texture),
        morphological: mean(|r| r.p_shape),
        meta_learning: mean(|r| r.p_meta),
        oracle: mean(|r| r.p_oracle),
    }
}

/// Run the full protocol on loaded samples. Folds execute in parallel;
/// everything is deterministic given (samples, config).
pub fn run_experiment(
    samples: &[ImageSample],
    config: &ExperimentConfig,
) -> Result<EvaluationReport> {
    if samples.is_empty() {
        return Err(Error::Config("no samples".into()));
    }
    let prepared = prepare(samples, config.patch_size)?;

    let items: Vec<SplitItem> = samples
        .iter()
        .map(|s| SplitItem {
            id: s.id.clone(),
            label: s.label,
            source: s.source.clone(),
        })
        .collect();
    let plan = make_split_plan(&items, config.fold_count, config.seed)?;

    let outcomes: Vec<std::result::Result<FoldReport, InvalidFold>> = (0..config.fold_count)
        .into_par_iter()
        .map(|fold| run_fold(fold, &prepared, &plan, config))
        .collect();

    let mut folds = Vec::new();
    let mut invalid_folds = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(f) => folds.push(f),
            Err(e) => invalid_folds.push(e),
        }
    }
    if folds.is_empty() {
        let detail = invalid_folds
            .first()
            .map(|f| format!("fold {} failed at {}: {}", f.fold, f.stage, f.message))
            .unwrap_or_default();
        return Err(Error::Config(format!("every fold failed; first: {detail}")));
    }

    let pooled_records: Vec<&SampleRecord> =
        folds.iter().flat_map(|f| f.records.iter()).collect();
    let pooled = method_metrics(&pooled_records)?;
    let pooled_mean_error = mean_errors(&pooled_records);

    let p_shape: Vec<f64> = pooled_records.iter().map(|r| r.p_shape).collect();
    let p_texture: Vec<f64> = pooled_records.iter().map(|r| r.p_texture).collect();
    let output_correlation = pearson_correlation(&p_shape, &p_texture).ok();

    let texture_choices = pooled_records
        .iter()
        .filter(|r| r.recommendation == Choice::Texture)
        .count();
    let selector_distribution = ChoiceDistribution {
        shape: pooled_records.len() - texture_choices,
        texture: texture_choices,
    };

    let mut sources: Vec<String> = Vec::new();
    for s in samples {
        if !sources.contains(&s.source) {
            sources.push(s.source.clone());
        }
    }
    let malignant = samples
        .iter()
        .filter(|s| s.label.as_u8() == 1)
        .count();

    Ok(EvaluationReport {
        config: *config,
        dataset: DatasetSummary {
            sample_count: samples.len(),
            benign: samples.len() - malignant,
            malignant,
            sources,
        },
        folds,
        invalid_folds,
        pooled,
        pooled_mean_error,
        output_correlation,
        selector_distribution,
    })
}
