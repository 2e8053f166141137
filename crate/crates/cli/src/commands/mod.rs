//! Subcommand implementations.

pub mod depth;
pub mod eval;
pub mod gen;
pub mod heatmap;
pub mod keypoints;
