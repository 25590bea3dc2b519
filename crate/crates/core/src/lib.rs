//! Reverse dictionary over single- and multi-sense word embeddings.
//!
//! A description is encoded by an LSTM plus dense projection into a vector
//! that is ranked by cosine similarity against a vocabulary of (sense)
//! vectors. Input words may be represented by their single-sense vector, a
//! fixed or random sense, or an attention-weighted mixture of their senses
//! conditioned on the whole description.

pub mod api;
pub mod checkpoint;
pub mod dataset;
pub mod embeddings;
pub mod error;
pub mod hashing;
pub mod model;
pub mod nn;
pub mod ranking;
pub mod selection;
pub mod study;
pub mod synth;
pub mod train;
pub mod vecops;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
