//! Motion-capture analysis and synthesis.
//!
//! The pipeline runs from raw marker trials through trimming, resampling and
//! z-scoring ([`dataset`]), label-preserving geometric augmentation
//! ([`augment`]), a three-branch dilated 1-D CNN classifier ([`classifier`]),
//! DCGAN / WGAN-GP sequence generators ([`gan`]) and skeleton geometry export
//! ([`render`]). All of it runs on the small reverse-mode engine in [`numerics`].

pub mod augment;
pub mod classifier;
pub mod dataset;
pub mod gan;
pub mod numerics;
pub mod render;
pub mod rng;

pub use numerics::{NumericsError, Tensor};
