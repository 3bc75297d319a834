//! Sequence-based visual place recognition that fuses several image
//! descriptor channels through a hidden Markov model.

pub mod config;
pub mod dataset_io;
pub mod descriptors;
pub mod error;
pub mod evaluation;
pub mod fusion;
pub mod pipeline;
pub mod sequence;

pub use error::{Error, Result};
