//! Building blocks for a small-target video detection pipeline.
//!
//! The crate wraps a pluggable detector with everything around it:
//! overlapping-tile inference planning ([`tiling`]), cross-window detection
//! fusion with NMS ([`fusion`]), temporal gap filling ([`temporal`]),
//! copy-paste training-set augmentation ([`augment`]), AP50 scoring
//! ([`evaluation`]) and synthetic scenes plus a mock detector ([`synth`],
//! [`backend`]) so the whole chain is testable without a trained model.
//!
//! Batch stages run on rayon when the `parallel` feature (default) is
//! enabled and fall back to sequential iteration otherwise; results are
//! identical either way.

pub mod augment;
pub mod backend;
pub mod evaluation;
pub mod exec;
pub mod fusion;
pub mod geometry;
pub mod ingest;
pub mod pipeline;
mod seed;
pub mod synth;
pub mod temporal;
pub mod tiling;
