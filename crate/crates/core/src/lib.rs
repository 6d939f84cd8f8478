//! Decoding synthetic neural activity into text.
//!
//! The pipeline mirrors a two-stage speech BCI decoder: a recurrent network
//! trained with CTC maps features to phoneme (or diphone) posteriors, and a
//! lexicon-constrained beam search with an n-gram language model turns them
//! into N-best sentence hypotheses. Hypotheses from several independently
//! trained decoders are then rescored and merged.

pub mod alphabet;
pub mod config;
pub mod data;
pub mod decode;
pub mod ensemble;
pub mod error;
pub mod llm_client;
pub mod lm;
pub mod math;
pub mod metrics;
pub mod nn;
pub mod pipeline;

pub use error::{Error, Result};
