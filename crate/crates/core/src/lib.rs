//! Hierarchical sequential sentence classification for biomedical abstracts.
//!
//! The pipeline maps each word to an embedding, encodes every sentence with a
//! bidirectional LSTM (optionally followed by structured self-attention), runs
//! a document-level bidirectional LSTM over the sentence vectors, and decodes
//! the label sequence with a linear-chain CRF or a rule-constrained decoder.
//!
//! Everything trainable is built on the small reverse-mode tape in
//! [`autodiff`], so every layer can be verified against finite differences.

pub mod autodiff;
pub mod cli;
pub mod correction;
pub mod corpus;
pub mod docmodel;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod layers;
pub mod optim;
pub mod synth;

pub use error::{Error, Result};

/// Random stream used for initialization, shuffling and dropout.
pub type ModelRng = rand_chacha::ChaCha8Rng;
