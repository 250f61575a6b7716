//! Command-line surface: `generate`, `features`, `run`, and `report-plot`.
//!
//! All outputs land under `--out DIR` with fixed filenames; `run` writes
//! `report.json`, `predictions.csv`, `split_plan.json`, `roc.svg`, and
//! `agreement.svg`. Exit code 0 means no sample failed and no fold was
//! invalid.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::dataio::{load_sample, ImageSample, Manifest};
use crate::error::{Error, Result};
use crate::evalharness::{plots, run_experiment, EvaluationReport, ExperimentConfig};
use crate::features::{extract_features, morph_feature_names, texture_feature_names_owned};
use crate::metalearn::Backend;
use crate::synthgen::{self, GenConfig};

#[derive(Debug, Parser)]
#[command(
    name = "metasel",
    version,
    about = "Lesion classifier selection: shape and texture classifiers, a per-image meta-selector, and a nested cross-validation harness"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic lesion dataset (images, masks, manifest)
    Generate(GenerateArgs),
    /// Extract morphology and texture feature CSVs from a manifest
    Features(FeaturesArgs),
    /// Run the nested cross-validation experiment and write reports
    Run(RunArgs),
    /// Re-render the SVG plots from an existing report.json
    ReportPlot(ReportPlotArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Output directory for the dataset
    #[arg(long)]
    pub out: PathBuf,
    /// Number of samples
    #[arg(long, default_value_t = 400)]
    pub count: usize,
    /// Square image size in pixels
    #[arg(long, default_value_t = 128)]
    pub size: usize,
    /// Fraction of malignant samples
    #[arg(long, default_value_t = 0.5)]
    pub malignant_fraction: f64,
    /// Shape cue strength in [0,1]
    #[arg(long, default_value_t = 1.0)]
    pub shape_cue: f64,
    /// Texture cue strength in [0,1]
    #[arg(long, default_value_t = 1.0)]
    pub texture_cue: f64,
    /// Probability of the shadow corruption
    #[arg(long, default_value_t = 0.3)]
    pub p_shadow: f64,
    /// Probability of the noise corruption
    #[arg(long, default_value_t = 0.3)]
    pub p_noise: f64,
    /// Generator seed
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Number of synthetic source tags to cycle through
    #[arg(long, default_value_t = 1)]
    pub sources: usize,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    /// Manifest CSV path
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory for morphology.csv and texture.csv
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads (0 = number of processors)
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Manifest CSV path
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory for reports and plots
    #[arg(long)]
    pub out: PathBuf,
    /// Experiment seed
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Cross-validation folds
    #[arg(long, default_value_t = 8)]
    pub folds: usize,
    /// L1 strength for the morphological classifier
    #[arg(long, default_value_t = 0.01)]
    pub lambda_shape: f64,
    /// L1 strength for the texture classifier
    #[arg(long, default_value_t = 0.01)]
    pub lambda_texture: f64,
    /// Selector backend: descriptor | convnet
    #[arg(long, default_value = "descriptor", value_parser = parse_backend)]
    pub backend: Backend,
    /// Selector patch size (multiple of 8)
    #[arg(long, default_value_t = 64)]
    pub patch_size: usize,
    /// Selector training epochs (convnet backend)
    #[arg(long, default_value_t = 200)]
    pub selector_epochs: usize,
    /// Selector learning rate (convnet backend)
    #[arg(long, default_value_t = 1e-4)]
    pub selector_lr: f64,
    /// Worker threads (0 = number of processors)
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct ReportPlotArgs {
    /// Path to an existing report.json
    #[arg(long)]
    pub report: PathBuf,
    /// Output directory for the SVG plots
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_backend(s: &str) -> std::result::Result<Backend, String> {
    s.parse()
}

/// Dispatch a parsed command line; returns the process exit code.
pub fn execute(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Generate(args) => cmd_generate(&args),
        Command::Features(args) => in_pool(args.jobs, || cmd_features(&args)),
        Command::Run(args) => in_pool(args.jobs, || cmd_run(&args)),
        Command::ReportPlot(args) => cmd_report_plot(&args),
    }
}

fn in_pool<T>(jobs: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T>
where
    T: Send,
{
    let threads = if jobs == 0 {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    } else {
        jobs
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
    pool.install(f)
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<i32> {
    let config = GenConfig {
        count: args.count,
        image_size: args.size,
        malignant_fraction: args.malignant_fraction,
        shape_cue_strength: args.shape_cue,
        texture_cue_strength: args.texture_cue,
        p_shadow: args.p_shadow,
        p_noise: args.p_noise,
        seed: args.seed,
        source_count: args.sources,
    };
    let manifest = synthgen::generate(&config, &args.out)?;
    println!(
        "wrote {} samples to {} (manifest.csv, truth_tags.csv)",
        manifest.len(),
        args.out.display()
    );
    Ok(0)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn csv_row(id: &str, values: &[f64]) -> String {
    let mut row = String::from(id);
    for v in values {
        row.push(',');
        row.push_str(&format!("{v}"));
    }
    row.push('\n');
    row
}

pub fn cmd_features(args: &FeaturesArgs) -> Result<i32> {
    let manifest = Manifest::load(&args.manifest)?;
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;

    let results: Vec<_> = manifest
        .rows()
        .par_iter()
        .map(|row| {
            load_sample(&manifest, row).and_then(|sample| extract_features(&sample))
        })
        .collect();

    let mut morph_csv = format!("id,{}\n", morph_feature_names().join(","));
    let mut texture_csv = format!("id,{}\n", texture_feature_names_owned().join(","));
    let mut failures = Vec::new();
    for (row, result) in manifest.rows().iter().zip(results) {
        match result {
            Ok(record) => {
                morph_csv.push_str(&csv_row(&record.id, &record.morph));
                texture_csv.push_str(&csv_row(&record.id, &record.texture));
            }
            Err(e) => failures.push((row.id.clone(), e)),
        }
    }

    write_text(&args.out.join("morphology.csv"), &morph_csv)?;
    write_text(&args.out.join("texture.csv"), &texture_csv)?;
    println!(
        "wrote features for {} samples to {}",
        manifest.len() - failures.len(),
        args.out.display()
    );
    for (id, e) in &failures {
        eprintln!("sample {id} failed: {e}");
    }
    Ok(i32::from(!failures.is_empty()))
}

fn load_all_samples(manifest: &Manifest) -> Result<Vec<ImageSample>> {
    let results: Vec<_> = manifest
        .rows()
        .par_iter()
        .map(|row| load_sample(manifest, row))
        .collect();
    let mut samples = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (row, result) in manifest.rows().iter().zip(results) {
        match result {
            Ok(s) => samples.push(s),
            Err(e) => failures.push(format!("sample {}: {e}", row.id)),
        }
    }
    if !failures.is_empty() {
        return Err(Error::Config(format!(
            "{} samples failed to load:\n{}",
            failures.len(),
            failures.join("\n")
        )));
    }
    Ok(samples)
}

fn write_report_files(report: &EvaluationReport, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    std::fs::write(out.join("report.json"), report.to_json_pretty()?)
        .map_err(|e| Error::io(out.join("report.json"), e))?;
    write_text(&out.join("predictions.csv"), &report.predictions_csv())?;
    write_text(&out.join("roc.svg"), &plots::roc_svg(report))?;
    write_text(&out.join("agreement.svg"), &plots::agreement_svg(report))?;
    Ok(())
}

pub fn cmd_run(args: &RunArgs) -> Result<i32> {
    let manifest = Manifest::load(&args.manifest)?;
    let samples = load_all_samples(&manifest)?;

    let config = ExperimentConfig {
        seed: args.seed,
        fold_count: args.folds,
        lambda_shape: args.lambda_shape,
        lambda_texture: args.lambda_texture,
        backend: args.backend,
        patch_size: args.patch_size,
        selector_epochs: args.selector_epochs,
        selector_learning_rate: args.selector_lr,
    };

    // audit artifact: the exact split used by the experiment
    let items: Vec<crate::dataio::SplitItem> = samples
        .iter()
        .map(|s| crate::dataio::SplitItem {
            id: s.id.clone(),
            label: s.label,
            source: s.source.clone(),
        })
        .collect();
    let plan = crate::dataio::make_split_plan(&items, config.fold_count, config.seed)?;

    let report = run_experiment(&samples, &config)?;
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    write_text(
        &args.out.join("split_plan.json"),
        &format!("{:#}\n", plan.to_json()),
    )?;
    write_report_files(&report, &args.out)?;

    println!("method          AUC     accuracy");
    for (name, m) in report.pooled.as_named() {
        println!("{name:<15} {:.3}   {:.3}", m.auc, m.accuracy);
    }
    if let Some(corr) = report.output_correlation {
        println!("output correlation: {corr:.3}");
    }
    for f in &report.invalid_folds {
        eprintln!("fold {} invalid at stage {}: {}", f.fold, f.stage, f.message);
    }
    println!("report written to {}", args.out.display());
    Ok(i32::from(!report.invalid_folds.is_empty()))
}

pub fn cmd_report_plot(args: &ReportPlotArgs) -> Result<i32> {
    let bytes = std::fs::read(&args.report).map_err(|e| Error::io(&args.report, e))?;
    let report: EvaluationReport = serde_json::from_slice(&bytes)?;
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    write_text(&args.out.join("roc.svg"), &plots::roc_svg(&report))?;
    write_text(&args.out.join("agreement.svg"), &plots::agreement_svg(&report))?;
    println!("plots written to {}", args.out.display());
    Ok(0)
}
