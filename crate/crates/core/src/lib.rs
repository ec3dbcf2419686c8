//! Online anomaly detection with commute-time distance on mutual k-NN graphs.
//!
//! A training set is turned into a mutual k-nearest-neighbour similarity graph whose
//! Laplacian eigensystem answers commute-time queries. Training points are ranked by
//! their average commute time to the `k2` nearest nodes, and the weakest of the top `N`
//! sets the anomaly threshold `tau`. New points are scored online by one of three
//! backends:
//!
//! * [`Method::Batch`] re-decomposes the grown graph (reference answer, slow);
//! * [`Method::Iled`] updates every retained eigenpair incrementally ([`iled`]);
//! * [`Method::Iect`] estimates commute times from the hitting-time recursion in
//!   constant time per query ([`iect`]).
//!
//! The [`oracle`] module holds brute-force references (dense pseudo-inverse, linear
//! hitting-time solves, Monte-Carlo walks) used to validate the fast paths.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datagen;
pub mod detector;
pub mod error;
pub mod graph;
pub mod iect;
pub mod iled;
pub mod io;
pub mod knn;
pub mod oracle;
pub mod persist;
pub mod spectral;

pub use detector::{Method, Model, PrecisionRecall, ScoreConfig, ScoreResult, TrainConfig};
pub use error::{Error, Result};
pub use graph::{Graph, Perturbation, PointSet};
pub use spectral::{CommuteTimes, EigenSystem};
