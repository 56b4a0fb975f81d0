//! Block-wise ConvLSTM conditional Wasserstein-GAN for singing voice synthesis.
//!
//! The crate covers the whole pipeline: phone annotations and feature
//! containers ([`features`]), a reference sinusoids-plus-noise vocoder
//! ([`vocoder`]), a small reverse-mode differentiable substrate ([`nn`]), the
//! generator and critic ([`model`]), adversarial training ([`training`]),
//! overlap-add inference with voice change ([`inference`]) and objective metrics
//! ([`evaluation`]).

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod evaluation;
pub mod features;
pub mod inference;
pub mod model;
pub mod nn;
pub mod training;
pub mod vocoder;

pub use error::{Error, Result};
