//! Text-prompted object counting.
//!
//! A two-stage pipeline: a contrastive alignment stage pulls text embeddings
//! toward the visual embeddings of the objects they describe, and a counting
//! stage fuses aligned text with visual patch tokens through cross-attention
//! and decodes a density map whose sum is the predicted count.
//!
//! The crate is organized bottom-up:
//!
//! * [`domain`] — samples, prompts, density maps, validation
//! * [`nn`] — dense layers with explicit forward/backward, resampling,
//!   gradient checking
//! * [`encoders`] — frozen toy backbones, the trainable alignment heads,
//!   and embedding dump files
//! * [`model`] — full model assembly, parameter groups, checkpoints
//! * [`alignment`] — stage-1 contrastive training
//! * [`counter`] — stage-2 cross-attention counter and density losses
//! * [`data`] — ground-truth rasterization, dataset manifests, the synthetic
//!   shapes generator, and description tooling
//! * [`eval`] — counting inference and error metrics
//!
//! All numerics are f64 and deterministic: seeded RNG streams, ordered maps,
//! sequential accumulation. Training runs with the same seed produce
//! byte-identical artifacts.

pub mod alignment;
pub mod counter;
pub mod data;
pub mod domain;
pub mod encoders;
pub mod error;
pub mod eval;
pub mod model;
pub mod nn;

pub use error::{Error, Result};
