use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by any stage of the workflow.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot decode image {path}: {source}")]
    ImageDecode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("cannot encode image {path}: {source}")]
    ImageEncode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("unsupported bit depth in {path}: expected 8-bit samples, found {found}")]
    UnsupportedBitDepth { path: PathBuf, found: String },

    #[error("unsupported channel count in {path}: expected 3-channel RGB, found {found}")]
    UnsupportedChannelCount { path: PathBuf, found: String },

    #[error("extent {width}x{height} is not divisible by cell size {cell}")]
    IndivisibleExtent { width: u32, height: u32, cell: u32 },

    #[error("patch size {patch} exceeds image dimensions {width}x{height}")]
    PatchTooLarge { patch: u32, width: u32, height: u32 },

    #[error("patch {width}x{height} is smaller than one descriptor block of {min} px")]
    PatchTooSmall { width: u32, height: u32, min: u32 },

    #[error("shadow mask covers every pixel; no sunlit reference for histogram matching")]
    NoSunlitReference,

    #[error("{rows} rows are fewer than the requested {k} clusters")]
    InsufficientData { rows: usize, k: usize },

    #[error("dimensionality mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("feature file {path} is missing patch key {image_id}:({x},{y})")]
    MissingFeatureKey {
        path: PathBuf,
        image_id: String,
        x: u32,
        y: u32,
    },

    #[error("feature file {path} has duplicate patch key {image_id}:({x},{y})")]
    DuplicateFeatureKey {
        path: PathBuf,
        image_id: String,
        x: u32,
        y: u32,
    },

    #[error(
        "feature file {path} row for {image_id}:({x},{y}) has length {got}, declared dim {expected}"
    )]
    FeatureLengthMismatch {
        path: PathBuf,
        image_id: String,
        x: u32,
        y: u32,
        expected: usize,
        got: usize,
    },

    #[error("point {image_id}:({x},{y}) lies outside the image extent {width}x{height}")]
    PointOutOfExtent {
        image_id: String,
        x: f64,
        y: f64,
        width: u32,
        height: u32,
    },

    #[error("labeling rule selected no positive cluster; a training set needs positives")]
    EmptyPositiveSet,

    #[error("top-{m} rule exceeds the cluster count {k}")]
    TopMExceedsK { m: usize, k: usize },

    #[error("training data contains a single class; both classes are required")]
    DegenerateLabels,

    #[error("polygon has {vertices} vertices; at least 3 are required")]
    DegeneratePolygon { vertices: usize },

    #[error("majority vote requires at least one mask")]
    EmptyMaskList,

    #[error("mask dimensions differ: {a_width}x{a_height} vs {b_width}x{b_height}")]
    MaskDimMismatch {
        a_width: u32,
        a_height: u32,
        b_width: u32,
        b_height: u32,
    },

    #[error("window {window} exceeds image dimensions {width}x{height}")]
    WindowExceedsImage {
        window: u32,
        width: u32,
        height: u32,
    },

    #[error("window {window} is not a multiple of step {step}")]
    WindowNotMultipleOfStep { window: u32, step: u32 },

    #[error("placement budget exhausted after {attempts} attempts; canopies too crowded")]
    TooCrowded { attempts: u32 },

    #[error("malformed {what} in {path}: {detail}")]
    Format {
        what: &'static str,
        path: PathBuf,
        detail: String,
    },

    #[error("pipeline stage `{stage}` failed")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
