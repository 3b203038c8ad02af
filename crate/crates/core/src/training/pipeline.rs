use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{center_on_root, AugmentationConfig, SkeletonSequence, SkeletonTopology, Stream};
use crate::encoder::{build_adjacency, input_tensor, Encoder, StgcnConfig};
use crate::error::Result;
use crate::numerics::Tensor;

/// Raw clip to standardized encoder input for one stream.
#[derive(Clone, Debug)]
pub struct Pipeline {
    pub stream: Stream,
    pub topology: SkeletonTopology,
}

impl Pipeline {
    pub fn new(stream: Stream, topology: SkeletonTopology) -> Self {
        Self { stream, topology }
    }

    /// Center, derive the stream, standardize.
    pub fn plain(&self, s: &SkeletonSequence) -> Result<Tensor> {
        let centered = center_on_root(s, self.topology.root());
        Ok(input_tensor(&self.stream.derive(&centered, &self.topology)?))
    }

    /// Center, augment the joint coordinates, derive the stream, standardize.
    pub fn augmented<R: Rng + ?Sized>(&self, s: &SkeletonSequence, aug: &AugmentationConfig, rng: &mut R) -> Result<Tensor> {
        let centered = center_on_root(s, self.topology.root());
        let view = aug.apply(&centered, rng)?;
        Ok(input_tensor(&self.stream.derive(&view, &self.topology)?))
    }
}

pub fn build_encoder(config: &StgcnConfig, topology: &SkeletonTopology, variational: bool) -> Result<Encoder> {
    Encoder::new(config.clone(), build_adjacency(topology)?, variational)
}

pub(crate) fn standard_normal<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Tensor {
    Tensor::vector((0..d).map(|_| StandardNormal.sample(rng)).collect())
}
