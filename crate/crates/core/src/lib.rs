//! Variational contrastive self-supervised learning for skeleton action
//! sequences.
//!
//! The crate is organised bottom-up:
//!
//! - [`numerics`]: dense `f64` tensors and a reverse-mode tape.
//! - [`data`]: skeleton sequences, streams, augmentations, synthetic data and
//!   the `SKL1` dataset format.
//! - [`encoder`]: a reduced ST-GCN backbone with a Gaussian head.
//! - [`contrastive`]: memory queue, momentum update and the InfoNCE + KL
//!   objective.
//! - [`training`]: AdamW, the pretext and downstream protocols, fusion,
//!   checkpoints, metrics and saliency.
//! - [`cli`]: run configuration and the `vcl` command-line entry point.

pub mod cli;
pub mod contrastive;
pub mod data;
pub mod encoder;
pub mod error;
pub mod numerics;
pub mod training;

pub use error::{Error, Result};
