//! Multimodal stochastic RNN decoder for generative video captioning.
//!
//! The decoder fuses word features with a mean-pooled video feature in a
//! multimodal LSTM, and a backward LSTM plus a Gaussian stochastic cell adds
//! per-step latent variables trained with a variational objective. Sampling
//! the latents at test time yields multiple distinct captions per clip.

pub mod cli;
pub mod data;
pub mod decoding;
pub mod error;
pub mod layers;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod training;

pub use error::{Error, Result};
