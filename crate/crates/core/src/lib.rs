//! LiDAR grid representations and unpaired sim2real translation at desk scale.
//!
//! The crate covers the full pipeline from raw point clouds to trained
//! translators:
//!
//! - [`pointcloud`]: 3D points, spherical conversions, sensor presets.
//! - [`projection`]: polar grid maps (invertible range images) and
//!   bird's-eye-view rasters, plus 3D box footprint transfer.
//! - [`dataio`]: KITTI/CARLA ingestion, grid serialization, P5 export,
//!   deterministic unpaired batch sampling.
//! - [`tensor`]: a minimal f64 autodiff engine for small convolutional
//!   networks with finite-difference verification.
//! - [`cyclegan`]: adversarial + cycle-consistency losses and the
//!   alternating minimax trainer.
//! - [`supervised`]: reference models, extrinsic evaluation losses,
//!   advantage terms, lambda scenarios, and the 3-phase trainer.
//! - [`metrics`]: reconstruction error, grid IoU, annotation overlays.
//! - [`cli`]: the `lidarcycle` command-line surface.

pub mod cli;
pub mod cyclegan;
pub mod dataio;
pub mod error;
pub mod metrics;
pub mod pointcloud;
pub mod projection;
pub mod rng;
pub mod supervised;
pub mod synthetic;
pub mod tensor;

pub use error::{Error, Result};
