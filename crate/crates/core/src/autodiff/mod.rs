//! Dense `f64` tensors with a reverse-mode tape.
//!
//! Layers record primitive operations on a [`Tape`] that borrows the
//! [`ParamStore`]; [`Tape::backward`] replays adjoints in reverse order and
//! returns per-parameter gradients. [`grad_check`] compares those against
//! central finite differences and is the oracle every layer is tested with.

mod checkpoint;
mod gradcheck;
mod param;
mod tape;
mod tensor;

pub use checkpoint::{Checkpoint, FORMAT_VERSION, MAGIC};
pub use gradcheck::grad_check;
pub use param::{ParamGrads, ParamId, ParamStore, Parameter};
pub use tape::{Axis, CustomOp, NodeId, Tape};
pub use tensor::{argmax, logsumexp, softmax, Tensor};
