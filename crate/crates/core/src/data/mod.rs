//! Skeleton clips, streams, augmentations, synthetic data and file formats.

mod augment;
mod dataset;
mod io;
pub mod rng;
mod sequence;
mod synth;
mod topology;

pub use augment::{apply_shear, shear_augment, shear_matrix, temporal_crop_augment, AugmentationConfig};
pub use dataset::{category_balanced_subset, Dataset};
pub(crate) use io::ByteReader;
pub use io::{decode_dataset, encode_dataset, load_dataset, save_dataset, DATASET_MAGIC, DATASET_VERSION};
pub use sequence::{
    center_on_root, derive_bone_stream, derive_motion_stream, interpolate_to_length, SkeletonSequence, Stream,
    CHANNELS,
};
pub use synth::{synth_generate, Nuisance, SynthGenerator, SynthSpec, CLASS0_JOINTS};
pub use topology::SkeletonTopology;
