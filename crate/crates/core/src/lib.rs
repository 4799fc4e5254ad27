//! Ranking neighborhoods by collective efficacy from location-tagged
//! tweets: pairwise 3-class classifiers over per-neighborhood text features,
//! aggregated into a weak ordering and scored with τ_x.

pub mod artifact;
pub mod baselines;
pub mod config;
pub mod corpus;
pub mod error;
pub mod features;
pub mod metrics;
pub mod pipeline;
pub mod ranker;
pub mod synth;
pub mod text;

pub use error::{Error, Result};
