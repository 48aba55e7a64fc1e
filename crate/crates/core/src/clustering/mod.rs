//! Agglomerative hierarchical clustering over Gower dissimilarities.
//!
//! The pipeline is [`gower_dissimilarity`] → [`agnes`] for each
//! [`Linkage`] → [`select_model`] by agglomerative coefficient →
//! [`build_dendrogram`] and [`cut_tree`]/[`choose_k`] for a flat grouping.

mod agnes;
mod cut;
mod dendrogram;
mod gower;

use thiserror::Error;

pub use agnes::{
    agglomerative_coefficient, agnes, fit_all, select_model, AgglomerativeCoefficient, ClusteringModel, LanceWilliams,
    Linkage, Merge, MergeTrace, TIE_RELATIVE_TOLERANCE,
};
pub use cut::{choose_k, cut_tree, default_k_range, silhouette_width, ClusterAssignment, KChoice};
pub use dendrogram::{build_dendrogram, Dendrogram, DendrogramNode, DendrogramWire};
pub use gower::{gower_dissimilarity, DissimilarityMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusteringError {
    #[error("no observations")]
    Empty,
    #[error("no feature varies across observations")]
    DegenerateFeatures,
    #[error("need at least 2 observations, got {0}")]
    InsufficientObservations(usize),
    #[error("k = {k} is out of range for {n} observations")]
    InvalidK { k: usize, n: usize },
    #[error("invalid dissimilarity d[{i}][{j}] = {value}")]
    InvalidDistance { i: usize, j: usize, value: f64 },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid merge trace: {0}")]
    InvalidTrace(String),
    #[error("unknown linkage `{0}`")]
    UnknownLinkage(String),
    #[error("numeric failure: {0}")]
    NumericFailure(String),
}
