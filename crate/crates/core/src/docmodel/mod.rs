//! Document-level network, CRF objective and decoders.

mod crf;
mod emission;
mod head;
mod model;
mod rules;

pub use crf::{
    crf_log_partition, crf_nll, crf_sequence_score, log_partition, sequence_score, viterbi_decode, CrfParams,
    CrfScores,
};
pub use emission::EmissionNet;
pub use head::{cross_entropy, softmax_rows, CrfHead, HeadFactory, HeadRegistry, HeadSpec, RulesHead, SequenceHead};
pub use model::{DecodeMode, Document, EpochStats, ModelConfig, Prediction, SsnModel};
pub use rules::{constrained_decode, OrderRules};
