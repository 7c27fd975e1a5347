//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// UCM grid has the wrong dimensions or strengths outside [0, 1].
    #[error("malformed UCM grid: {0}")]
    MalformedGrid(String),

    /// Merge list references dead nodes, decreases in strength, or does not
    /// reduce to a single root.
    #[error("invalid merge list: {0}")]
    InvalidMergeList(String),

    /// Node id not present in the region tree.
    #[error("unknown node id {0}")]
    UnknownNode(u32),

    /// Box extends past the image border.
    #[error("box {x},{y} {w}x{h} out of bounds for {width}x{height} image")]
    BoxOutOfBounds {
        x: u32,
        y: u32,
        w: u32,
        h: u32,
        width: u32,
        height: u32,
    },

    /// Two codes (or a code and an index) disagree on dimension.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// An index cannot be fitted over zero codes.
    #[error("empty dataset")]
    EmptyDataset,

    /// Codes of differing dimensions were passed to a single fit.
    #[error("mixed code dimensions in dataset")]
    MixedDimensions,

    /// All hash-table lookups for a query came back empty.
    #[error("no candidates found in any hash table")]
    EmptyCandidates,

    /// No region survives the eligibility filter, so there is nothing to index.
    #[error("hierarchy has no eligible regions to index")]
    EmptyHierarchy,

    /// Instances passed to pruning belong to different images.
    #[error("instances reference different images: {0} vs {1}")]
    MixedImages(String, String),

    /// Connected-component extraction needs at least one set pixel.
    #[error("mask is empty")]
    EmptyMask,

    /// Evaluation requires at least one ground-truth instance.
    #[error("no ground truth instances")]
    NoGroundTruth,

    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },

    /// File contents do not match the declared format.
    #[error("{path}: {reason}")]
    Parse { path: String, reason: String },
}

impl Error {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub(crate) fn parse(path: &std::path::Path, reason: impl Into<String>) -> Self {
        Error::Parse {
            path: path.display().to_string(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
