use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::docmodel::{DecodeMode, ModelConfig, OrderRules};
use crate::encoder::{LastHiddenEncoder, SelfAttentionEncoder};
use crate::docmodel::{CrfHead, RulesHead};
use crate::error::{Error, Result};
use crate::layers::EmbeddingMode;
use crate::optim::AdamConfig;

/// Settings of one training run. Serialized next to every checkpoint so a
/// model can be evaluated without the original flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub train: PathBuf,
    pub dev: Option<PathBuf>,
    pub embedding_file: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub attention: bool,
    pub crf: bool,
    pub embedding_mode: EmbeddingMode,
    pub embedding_dim: usize,
    pub min_count: usize,
    pub hidden: usize,
    pub attention_dim: usize,
    pub num_aspects: usize,
    pub doc_hidden: usize,
    pub emission_hidden: usize,
    pub start_end: bool,
    pub dropout: f64,
    pub decode: DecodeMode,
    pub seed: u64,
    pub learning_rate: f64,
    pub clip_norm: f64,
    pub epochs: usize,
    pub patience: usize,
}

impl RunConfig {
    /// Defaults for everything but paths.
    pub fn new(train: PathBuf, out_dir: PathBuf) -> Self {
        RunConfig {
            train,
            dev: None,
            embedding_file: None,
            out_dir,
            attention: true,
            crf: true,
            embedding_mode: EmbeddingMode::PretrainedFrozen,
            embedding_dim: 200,
            min_count: 1,
            hidden: 100,
            attention_dim: 100,
            num_aspects: 8,
            doc_hidden: 100,
            emission_hidden: 100,
            start_end: true,
            dropout: 0.0,
            decode: DecodeMode::Head,
            seed: 42,
            learning_rate: 1e-3,
            clip_norm: 5.0,
            epochs: 50,
            patience: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.embedding_mode.needs_pretrained(), &self.embedding_file) {
            (true, None) => {
                return Err(Error::Config(
                    "pretrained embedding modes need --embedding-file (or use --embeddings random)".into(),
                ))
            }
            (false, Some(_)) => {
                return Err(Error::Config("--embedding-file given with --embeddings random".into()))
            }
            _ => {}
        }
        if !self.crf && self.decode == DecodeMode::Viterbi {
            return Err(Error::Config("--decode viterbi needs the CRF (drop --no-crf)".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("--epochs must be >= 1".into()));
        }
        if self.min_count == 0 {
            return Err(Error::Config("--min-count must be >= 1".into()));
        }
        self.model_config(1).validate()
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            clip_norm: Some(self.clip_norm),
            ..AdamConfig::default()
        }
    }

    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        let encoder = if self.attention {
            SelfAttentionEncoder::NAME
        } else {
            LastHiddenEncoder::NAME
        };
        let head = if self.crf { CrfHead::NAME } else { RulesHead::NAME };
        ModelConfig {
            encoder: encoder.into(),
            head: head.into(),
            decode: self.decode,
            embedding_mode: self.embedding_mode,
            vocab_size,
            embedding_dim: self.embedding_dim,
            hidden: self.hidden,
            attention_dim: self.attention_dim,
            num_aspects: self.num_aspects,
            doc_hidden: self.doc_hidden,
            emission_hidden: self.emission_hidden,
            start_end: self.start_end,
            dropout: self.dropout,
            labels: Label::ALL.to_vec(),
            rules: OrderRules::monotone(),
        }
    }
}
