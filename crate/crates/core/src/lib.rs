//! Post-network reconstruction of airway trees from segmentation outputs.
//!
//! The crate covers the classical half of a two-branch airway segmentation
//! pipeline:
//!
//! * [`volume`]: voxel grids, HU windowing, thresholding and 26-connected
//!   component analysis.
//! * [`skeleton`]: topology-preserving 3D curve thinning and decomposition of
//!   centerlines into branches.
//! * [`geodesic`]: intensity-weighted multi-source shortest-path distance
//!   fields over the 26-neighbour voxel graph, truncation, and exact
//!   nearest-site assignment.
//! * [`fusion`]: skeleton-embedding fusion of a fine-tuned prediction with a
//!   geodesic-branch prediction.
//! * [`loss`]: breakage-sensitive loss, its gradient, comparison losses and a
//!   breakage-sensitivity harness.
//! * [`metrics`]: precision, tree length detected and branch detected rates.
//! * [`phantom`]: synthetic tubular trees, CT-like rendering and breakage
//!   injection.
//! * [`io`], [`config`] and [`cli`]: MetaImage volume files, `key = value`
//!   run configuration and the `airway` command line.

pub mod cli;
pub mod config;
pub mod error;
pub mod fusion;
pub mod geodesic;
pub mod io;
pub mod loss;
pub mod metrics;
pub mod phantom;
pub mod skeleton;
pub mod volume;

pub use error::{Error, Result};
pub use volume::{BinaryMask, Grid, LabelMap, ScalarVolume};
