//! Dataset loading, validation, and split planning.

mod manifest;
mod pgm;
mod sample;
mod split;

pub use manifest::{Label, Manifest, ManifestRow, MANIFEST_HEADER};
pub use pgm::{read_gray, read_pgm, write_pgm};
pub use sample::{load_sample, ImageSample, MIN_IMAGE_DIM, MIN_MASK_AREA};
pub use split::{make_split_plan, Role, SplitItem, SplitPlan};
