//! Explanations for black-box text rankers.
//!
//! Given a query and a ranking produced by an opaque ranker, find a small set
//! of expansion terms such that a simple additive language model, run on the
//! expanded query, reproduces the ranking as closely as possible. The terms
//! are selected by greedily maximizing the number of preference pairs they
//! satisfy.

pub mod blackbox;
pub mod candidates;
pub mod embeddings;
pub mod error;
pub mod flags;
pub mod harness;
pub mod index;
pub mod metrics;
pub mod preference;
pub mod rankers;
pub mod ranking;
pub mod solver;
pub mod synth;
pub mod tokenize;

pub use error::{Error, Result};
pub use flags::Flag;
