//! Valence/arousal classification from raw photoplethysmography.
//!
//! The crate covers the whole pipeline: bandpass filtering, windowing and
//! z-scoring ([`signal`]), a small double-precision layer library with exact
//! gradients ([`nn`]), the CNN, CNN-LSTM and CNN-TCN-LSTM architectures
//! ([`model`]), class-weighted Adam training with early stopping
//! ([`train`]), and leave-one-subject-out evaluation with Table-style
//! reporting ([`eval`]). [`data`] defines the canonical dataset layout and a
//! synthetic generator; [`gradcheck`] verifies every layer against central
//! finite differences. All randomness flows from explicit seeds through [`seed`].

pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod model;
pub mod nn;
pub mod seed;
pub mod signal;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
