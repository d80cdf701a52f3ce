//! Agglomerative clustering of groups under a statistical notion of similarity.
//!
//! Groups (countries, demographic segments, ...) arrive as an estimate with a
//! standard error. The engine repeatedly merges the two most similar clusters
//! and stops as soon as every remaining pair is significantly different, which
//! both tests the global "all groups are alike" hypothesis and reports the
//! disparate clusters when it is rejected.
//!
//! - [`stats`]: special functions and two-sample summaries.
//! - [`similarity`]: cluster sufficient statistics and the likelihood-ratio test.
//! - [`engine`]: the sequential test-and-merge loop.
//! - [`simulation`]: seeded Monte Carlo studies of power and false rejections.
//! - [`io`]: input records, the result document and curve tables.

pub mod engine;
pub mod error;
pub mod io;
pub mod similarity;
pub mod simulation;
pub mod stats;

pub use engine::{run_clustering, ClusteringConfig, ClusteringResult, MergeStep, ThresholdPolicy, TieBreak};
pub use error::{Error, Result};
pub use similarity::{ClusterStats, GroupId, GroupMetric, LikelihoodRatio, RateKind, SimilarityNotion};
pub use stats::{PValue, SampleSummary};
