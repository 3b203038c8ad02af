//! Dense tensors and a reverse-mode differentiation tape.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{finite_diff_check, finite_diff_check_many};
pub use tape::{logsumexp, FrameMixer, Tape, Var};
pub use tensor::{matmul_raw, Tensor};
