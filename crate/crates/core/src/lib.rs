//! Point-cloud algorithms for detecting structural changes in scaffolding.
//!
//! The crate is `no_std` (it needs `alloc`) and holds every algorithm of the
//! inspection pipeline: the cloud data model and filters, a KD-tree, RANSAC
//! plane removal, point-to-point ICP, cloud-to-cloud deviation maps, the
//! element/graph extraction, graph comparison and a synthetic scaffold
//! generator used as ground truth. File formats, configuration and the CLI
//! live in the `scaffold-inspect` companion crate.
//!
//! A typical campaign comparison looks like:
//!
//! ```
//! use scaffold_core::registration::{icp, IcpParams};
//! use scaffold_core::synth::{generate_scaffold, ScaffoldSpec};
//!
//! let spec = ScaffoldSpec { points_per_meter: 60.0, ..ScaffoldSpec::default() };
//! let scene = generate_scaffold(&spec).unwrap();
//! let result = icp(&scene.cloud, &scene.cloud, &IcpParams::default()).unwrap();
//! assert!(result.converged);
//! assert_eq!(result.mse, 0.0);
//! ```
#![no_std]
#![warn(missing_debug_implementations)]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod cloud;
pub mod deviation;
mod error;
pub mod geometry;
pub mod graphdiff;
pub mod index;
pub(crate) mod math;
pub mod registration;
pub mod segmentation;
pub mod structure;
pub mod synth;

pub use cloud::{PointCloud, Rgb};
pub use error::{Error, Result};
pub use geometry::{Aabb, Point3};
pub use index::SpatialIndex;
