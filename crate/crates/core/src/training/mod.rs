//! Optimization, the pretext and downstream protocols, fusion, metrics,
//! checkpoints, saliency and exports.

mod checkpoint;
mod classify;
mod downstream;
mod export;
mod metrics;
mod optim;
mod parallel;
mod pipeline;
mod pretrain;
mod saliency;

pub use checkpoint::{hash_text, CheckpointBundle, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use classify::{argmax, cross_entropy, fuse_logits, fuse_predictions, top1_accuracy};
pub use downstream::{
    classifier_forward, finetune, init_classifier, linear_eval, linear_probe, semi_supervised, DownstreamConfig, DownstreamOutcome,
    Protocol,
};
pub use export::{embedding_dump, embeddings, format_map, format_rows, read_rows, write_logits};
pub use metrics::MetricsRecord;
pub use optim::{adamw_step, AdamWState, Schedule};
pub use parallel::map_ordered;
pub use pipeline::{build_encoder, Pipeline};
pub use pretrain::{checkpoint_encoder, pretrain, PretrainConfig, PretrainOutcome, Pretrainer};
pub use saliency::{grad_cam, joint_saliency};
