//! Per-image classifier selection for lesion images.
//!
//! The pipeline trains two standard lesion classifiers — one on 15
//! morphological contour features, one on 112 GLCM texture features — plus a
//! meta-selector that looks at each image and recommends which of the two to
//! trust. A nested stratified cross-validation harness evaluates the
//! standalone classifiers, the selector-driven pipeline, and an oracle upper
//! bound, and a deterministic synthetic generator provides datasets with
//! independently controllable shape and texture cues.
//!
//! Entry points:
//! - [`synthgen::generate`] writes a synthetic dataset (images, masks, manifest).
//! - [`features::extract_features`] computes both feature families for one sample.
//! - [`linmodel::LinearModel::fit`] trains an L1 logistic classifier.
//! - [`metalearn::train_selector`] trains the per-image selector.
//! - [`evalharness::run_experiment`] runs the full nested-CV protocol.
//!
//! The `metasel` binary exposes the same flow as `generate`, `features`,
//! `run`, and `report-plot` subcommands; `examples/` holds one runnable
//! example per capability.

pub mod cli;
pub mod dataio;
pub mod error;
pub mod evalharness;
pub mod features;
pub mod linmodel;
pub mod metalearn;
pub mod morphology;
pub mod synthgen;
pub mod texture;

pub use error::{Error, Result};
