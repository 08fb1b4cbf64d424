//! Density topography of layerwise data representations.
//!
//! The crate compares and dissects point clouds given as one activation
//! matrix per network layer:
//!
//! * [`knn`] builds exact Euclidean k-nearest-neighbor graphs.
//! * [`overlap`] measures how many neighbors two layers (or a layer and the
//!   class labels) share.
//! * [`density`] finds the peaks of the kNN density, the saddles between
//!   them, and merges peaks that are statistically indistinguishable.
//! * [`topography`] scores peak partitions with the Adjusted Rand Index,
//!   arranges peaks in a WPGMA dendrogram, and reports peak composition.
//! * [`entropy`] and [`cka`] hold auxiliary diagnostics: neighborhood image
//!   entropy and centered kernel alignment.
//! * [`npy`] and [`dataset`] load activations and labels.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cka;
pub mod dataset;
pub mod density;
pub mod entropy;
pub mod error;
pub mod knn;
pub mod npy;
pub mod overlap;
pub mod rng;
pub mod synth;
pub mod topography;

pub use dataset::{ActivationMatrix, AnalysisConfig, LabelSet, SampleSpec};
pub use density::{DensityEstimate, DensityPeaks, PeakLandscape, PeakPartition, SaddleTable};
pub use error::{Error, Result};
pub use knn::NeighborGraph;
pub use overlap::{OverlapReference, OverlapResult};
pub use topography::{Dendrogram, PeakReport};
