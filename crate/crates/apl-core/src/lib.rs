//! Weakly supervised image categorization toolkit.
//!
//! Turns unlabeled imagery plus sparse, misaligned point labels into a
//! trained pixel-wise classifier and dense class-distribution maps:
//!
//! 1. shadow-normalize images and cut them into fixed-size patches,
//! 2. describe each patch (HOG, color histograms, or ingested external
//!    features) and cluster the descriptors into visual prototypes,
//! 3. score each prototype's relevance from point labels and broadcast
//!    binary labels to member patches,
//! 4. train a gradient-boosted tree classifier on the labeled patches and
//!    slide it densely over images, averaging overlapping window scores
//!    into per-cell prediction maps,
//! 5. evaluate against rasterized point labels (ROC/AUC) and reference
//!    masks (accuracy/IoU).
//!
//! A deterministic synthetic forest generator provides desk-scale
//! end-to-end fixtures, and [`pipeline`] orchestrates the whole flow from
//! one config with file-based stage boundaries.

pub mod clustering;
pub mod error;
pub mod evaluation;
mod exec;
pub mod features;
pub mod gbdt;
pub mod inference;
pub mod labeling;
pub mod pipeline;
pub mod preprocess;
pub mod raster;
pub mod synthetic;

pub use error::{Error, Result};
