//! Density-map berry counting and grape yield estimation.
//!
//! The non-neural core of a counting-by-density pipeline:
//!
//! - [`density`] turns point annotations into count-preserving density
//!   maps (fixed or geometry-adaptive Gaussian kernels) and integrates
//!   maps back into counts.
//! - [`dgrd`] is the bit-exact grid file format through which any
//!   external density predictor plugs into the harness.
//! - [`dataset`] ingests annotation and manifest files, applies the
//!   preprocessing pipeline (height resize, quarter-area patches,
//!   horizontal flips) and produces deterministic k-fold splits.
//! - [`metrics`] implements per-image MAE / root-mean-square error and
//!   Overall MAE with per-variety, per-fold and cross-fold aggregation.
//! - [`yield_model`] holds the multiplicative yield models and the
//!   bundled historical weight series.
//! - [`predictor`] defines the predictor boundary with a noise-injected
//!   oracle and a classical blob-counting baseline, and emits training
//!   recipes for external learned models.
//!
//! The `densecount` binary exposes the whole pipeline as subcommands;
//! see the crate README for file formats and examples.

pub mod dataset;
pub mod density;
pub mod dgrd;
pub mod imgio;
pub(crate) mod knn;
pub mod metrics;
pub mod parallel;
pub mod predictor;
pub mod rng;
pub mod synthetic;
pub mod yield_model;

pub use density::{
    adaptive_sigmas, generate_density_map, integrate, knn_mean_distance, DensityError,
    DensityMap, KernelMode, KernelSpec, Point, PointAnnotationSet,
};
