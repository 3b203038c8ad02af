//! Memory queue, momentum encoder and the variational contrastive objective.

mod loss;
mod momentum;
mod queue;

pub use loss::{infonce_loss, kl_loss, total_loss, Branch, LossTerms, LossValues};
pub use momentum::{momentum_update, EncoderPair};
pub use queue::{MemoryQueue, UNIT_TOLERANCE};
