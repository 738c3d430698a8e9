//! Trainable building blocks on top of the autodiff tape.

mod dense;
mod embedding;
mod init;
mod lstm;

pub use dense::{dropout, Dense};
pub use embedding::{EmbeddingMode, EmbeddingTable};
pub use init::{glorot_bound, glorot_init, glorot_init_seeded};
pub use lstm::{BlstmOutput, BlstmParams, Gate, LstmParams};
