//! Train-free instance segmentation over hierarchical region trees.
//!
//! Given an image, a region hierarchy (from an ultrametric contour map or an
//! explicit merge list), and detection bounding boxes, the pipeline indexes
//! every hierarchy region in an L1 locality-sensitive hash and resolves each
//! box to its best-matching region, then removes overlap between the selected
//! masks by hierarchical pruning. An evaluation harness scores the results
//! with Jaccard and recall metrics.

pub mod codes;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod hierarchy;
pub mod hsh;
pub mod hsp;
pub mod io;
pub mod lsh;
pub mod mask;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
pub use geometry::PixelBox;
pub use mask::Mask;
