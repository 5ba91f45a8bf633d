//! Seeded topic modeling and evaluation for short civic-participation texts.
//!
//! The crate clusters proposal texts into topics with a deterministic
//! embedding -> reduction -> density-clustering -> class-TF-IDF pipeline,
//! optionally guided by taxonomy seed words, and scores the result with
//! internal (coherence/diversity) and external (ARI/NMI against reference
//! labels) metrics. An LLM client produces reference labels and topic names
//! through a small HTTP contract.
//!
//! The top-level entry points are [`pipeline::fit`] and [`pipeline::transform`];
//! [`experiments`] wraps them in grid-search and comparison protocols.

pub mod clustering;
pub mod corpus;
pub mod embeddings;
pub mod experiments;
pub(crate) mod httpc;
pub mod llm;
pub mod matrix;
pub mod metrics;
pub mod pipeline;
pub mod reduction;
pub mod taxonomy;
pub mod topics;

pub use matrix::DenseMatrix;
