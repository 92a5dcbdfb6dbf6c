//! Hierarchical attention networks for depression detection from therapy
//! transcripts, with affective-lexicon conditioning of the word-level
//! attention, session-summary fusion, a Tf-Idf + linear SVM baseline,
//! corpus analytics and a cross-validation harness.
//!
//! All numerics are 64-bit and CPU-only. The differentiable core lives in
//! [`nn`]; [`model`] assembles the four network variants on top of it.

pub mod analysis;
pub mod baseline;
pub mod corpus;
pub mod error;
pub mod lexicon;
pub mod model;
pub mod nn;
pub mod seed;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
