//! Evaluation toolkit for open-ended text generation.
//!
//! Language models plug in through [`lm::LanguageModel`]; two small built-in
//! backends ([`lm::NGramLm`], [`lm::FeedForwardLm`]) make every pipeline
//! runnable on a laptop. [`decode`] implements the sampling strategies,
//! [`losses`] the training objectives, [`metrics`] quality and diversity
//! scores, [`consistency`] perplexity-based selection, and [`harness`] the
//! sweep pipeline that ties them together.

pub mod consistency;
pub mod corpus;
pub mod decode;
mod error;
pub mod harness;
pub mod lm;
pub mod losses;
pub mod metrics;
pub mod par;
pub mod rng;
pub mod toy;

pub use error::{Error, Result};
