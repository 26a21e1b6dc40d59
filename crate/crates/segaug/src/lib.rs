//! Segment-level logo augmentation toolkit.
//!
//! Logos are simple images made of color-homogeneous regions, so individual
//! segments can be transformed (recolored, removed, rotated) to synthesize
//! plausible similar variants. This crate provides the full pipeline:
//!
//! - [`image`]: RGB raster type with lossless PNG / PPM (P6) I/O.
//! - [`segmentation`]: color quantization + connected-component labeling.
//! - [`augment`]: seeded segment-level transforms with an audit record.
//! - [`losses`]: smoothed-AP and triplet ranking losses as value+gradient
//!   kernels, with an exact-AP oracle and a finite-difference checker.
//! - [`sampler`]: similar/dissimilar mini-batch construction.
//! - [`evaluation`]: NAR and Recall@K retrieval metrics.
//! - [`cli`]: the `segaug` command-line entry point.
//!
//! Everything is deterministic under a 64-bit seed; see [`seed`] for the
//! seeding contract.

pub mod augment;
pub mod cli;
pub mod evaluation;
pub mod image;
pub mod losses;
pub mod sampler;
pub mod seed;
pub mod segmentation;

pub use image::{Color, RasterImage};
pub use segmentation::{Connectivity, SegmentInfo, SegmentMap};
