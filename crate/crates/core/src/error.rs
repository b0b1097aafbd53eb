use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the measurement pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("{path}: unsupported sample layout ({layout}); expected single-channel 8/16-bit unsigned")]
    UnsupportedLayout { path: PathBuf, layout: String },

    #[error("{path}: dimensions {width}x{height} exceed the {cap} px per side cap")]
    DimensionCap {
        path: PathBuf,
        width: u32,
        height: u32,
        cap: u32,
    },

    #[error("label grid has {len} entries but {width}x{height} needs {}", (*.width as usize) * (*.height as usize))]
    GridSize { width: u32, height: u32, len: usize },

    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimensionMismatch { left: (u32, u32), right: (u32, u32) },

    #[error("{count} components exceed the 16-bit label range (max 65535)")]
    LabelOverflow { count: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("mask has no grains")]
    EmptyMask,

    #[error("only {available} grains fit a centered circle, target is {target}")]
    TargetUnreachable { target: usize, available: usize },

    #[error("grain density must be positive, got {0}")]
    NonPositiveDensity(f64),

    #[error("point ({x}, {y}) lies outside the {width}x{height} image")]
    OutsideImage { x: f64, y: f64, width: u32, height: u32 },

    #[error("grain {0} has no classification")]
    MissingClassification(u16),

    #[error("filename {0:?} does not match the patch pattern")]
    NoPatternMatch(String),

    #[error("patch pattern is invalid: {0}")]
    Pattern(String),

    #[error("patch ({row}, {col}) lies outside the {rows}x{cols} grid")]
    CoordinateOutOfGrid {
        row: u32,
        col: u32,
        rows: u32,
        cols: u32,
    },

    #[error("missing patch at ({row}, {col})")]
    MissingPatch { row: u32, col: u32 },

    #[error("duplicate patch at ({row}, {col})")]
    DuplicatePatch { row: u32, col: u32 },

    #[error("ground truth value at index {0} is zero")]
    ZeroGroundTruth(usize),

    #[error("length mismatch: {0} predictions vs {1} ground truth values")]
    LengthMismatch(usize, usize),

    #[error("serialization error: {0}")]
    Serialize(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn image(path: impl Into<PathBuf>, source: image::ImageError) -> Self {
        Error::Image {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
