//! Few-shot class-incremental learning for linear classifiers on frozen
//! feature vectors.
//!
//! A base classifier (ingested or trained here) is extended session by
//! session with new classes learned from a handful of examples. Fine-tuning
//! minimizes softmax cross-entropy plus three penalties: a weight prior, an
//! anchor that keeps previously learned rows near their snapshots, and a
//! pull on the new rows toward one of
//!
//! * the span of the base weights (subspace regularization),
//! * a similarity-weighted mix of base weights computed from class
//!   embeddings (semantic regularization), or
//! * a least-squares map from embeddings to weights (linear mapping).
//!
//! [`protocol`] runs the multi-session and single-session (episodic)
//! benchmarks on top of [`trainer`], and [`synth`] produces Gaussian
//! fixtures for desk-scale runs.

pub mod datamodel;
pub mod error;
pub mod linalg;
pub mod objectives;
pub mod protocol;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
