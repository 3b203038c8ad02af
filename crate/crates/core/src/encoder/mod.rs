//! Reduced ST-GCN backbone, Gaussian head and reparameterized sampling.

mod adjacency;
mod params;
mod stgcn;

pub use adjacency::{build_adjacency, GraphAdjacency};
pub use params::{accumulate, ParamSet};
pub use stgcn::{
    gaussian_head_forward, input_tensor, raw_input_tensor, reparameterize, Encoder, EncoderOutput, GaussianHead,
    StgcnConfig, LOGVAR_MAX, LOGVAR_MIN,
};
