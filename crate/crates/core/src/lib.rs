//! Multi-camera vehicle fusion and per-pixel post-encroachment time (PET).
//!
//! Per-camera detection polygons, already projected onto a shared bird's-eye
//! grid, are grouped in time ([`sync`]), fused into rotated vehicle rectangles
//! ([`fusion`]) and swept through a per-pixel stopwatch ([`pet`]) whose
//! vacancy intervals average into a PET map. [`render`] turns the maps into
//! heatmaps, [`store`] keeps timestamped records for later replay, and
//! [`simulator`] produces synthetic intersections with known ground truth.

pub mod config;
pub mod fusion;
pub mod geometry;
pub mod matrix;
pub mod pet;
pub mod pipeline;
pub mod render;
pub mod simulator;
pub mod store;
pub mod sync;

pub use config::{PipelineConfig, Roi};
pub use fusion::{FittedRectangle, FusionConfig, OverlapGrid};
pub use geometry::{BinaryMask, Homography, Point2, Polygon, RotatedRect};
pub use matrix::Matrix;
pub use pet::{PetEvent, PetGrid};
pub use sync::{DetectionFrame, FrameGroup, SyncBuffer};
