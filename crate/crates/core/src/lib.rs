//! Radio-map localization toolkit: synthesizes multi-antenna channel state
//! information for a simulated mmWave street grid, turns it into a fused
//! angular-profile dissimilarity matrix, and places unlabeled samples with
//! a label-constrained t-SNE, benchmarked against kNN and a Laplacian
//! interpolation baseline.

pub mod baselines;
pub mod channel;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod features;
pub mod geom;
pub mod pipeline;
pub mod raytrace;
pub mod rng;
pub mod scene;
pub mod stsne;

pub use error::{Error, Result};
pub use geom::Vec2;
