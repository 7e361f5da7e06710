//! Local surrogate explainers with information-filtered feature selection,
//! and exact budgeted aggregation of those explainers into a near-global
//! explainer.

pub mod aggregate;
pub mod blackbox;
pub mod data;
pub mod error;
pub mod explainer;
pub mod fffs;
pub mod io;
pub mod pipeline;
pub mod rng;
pub mod sampler;
pub mod tree;

pub use error::{Error, Result};
