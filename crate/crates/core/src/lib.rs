//! Procedural generation of full and partial non-rigid shape-matching
//! instances with dense ground truth, and their evaluation.
//!
//! The crate is organised bottom-up:
//!
//! - [`mesh`], [`geometry`], [`correspondence`], [`bvh`], [`geodesic`]: mesh
//!   representation, file formats and geometric primitives.
//! - [`remesh`]: quadric decimation with back-projected correspondence.
//! - [`partiality`]: simulated single-view scans and overlap-constrained
//!   partial pairs.
//! - [`corrnet`]: the shape network, correspondence composition along paths
//!   and annotation propagation.
//! - [`pipeline`]: configuration, pair enumeration and dataset generation.
//! - [`metrics`]: geodesic error curves, AUC, IoU, F1 and left/right accuracy.
//! - [`cli`]: the `corrbench` command-line front end.

pub mod bvh;
pub mod cache;
pub mod cli;
pub mod corrnet;
pub mod correspondence;
pub mod error;
pub mod geodesic;
pub mod geometry;
pub mod mesh;
pub mod metrics;
pub mod partiality;
pub mod pipeline;
pub mod remesh;
pub mod seed;
pub mod synth;
pub mod toy;

pub use error::{Error, Result};
