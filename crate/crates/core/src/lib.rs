//! Grid-based audiovisual speaker localization with spatial dynamic stream
//! weights.
//!
//! Per-modality presence grids are fused in the log domain, either flat,
//! with one scalar weight per frame, or with a learned weight per cell and
//! modality. A small convolutional refiner cleans the fused grid, and the
//! evaluation code scores detections against ground truth with optimal
//! assignment.

pub mod bench;
pub mod error;
pub mod fusion;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod model;
pub mod sim;
pub mod train;

pub use error::{Error, Result};
pub use fusion::FusionStrategy;
pub use grid::{GridGeometry, GroundTruthFrame, LogLikGrid, OccupancyGrid, ProbGrid, WeightGrid};
