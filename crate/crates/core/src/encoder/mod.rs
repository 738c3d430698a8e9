//! Sentence encoders: word embeddings (`d x n`) to one sentence vector.
//!
//! Each variant implements [`SentenceEncoder`] and is registered by name in
//! an [`EncoderRegistry`]; the model looks its encoder up at build time.

mod attention;
mod last_hidden;

pub use attention::{attention_matrix, sentence_matrix, AttentionParams, SelfAttentionEncoder};
pub use last_hidden::LastHiddenEncoder;

use std::collections::BTreeMap;
use std::fmt;

use crate::autodiff::{NodeId, ParamId, ParamStore, Tape};
use crate::error::{Error, Result};
use crate::ModelRng;

pub trait SentenceEncoder: fmt::Debug + Send + Sync {
    fn name(&self) -> &'static str;

    /// Length of the vector returned by [`SentenceEncoder::encode`].
    fn output_dim(&self) -> usize;

    fn params(&self) -> Vec<ParamId>;

    /// Encode one sentence given its embeddings as a `d x n` matrix;
    /// returns an `output_dim x 1` column.
    fn encode(&self, tape: &mut Tape, embedded: NodeId) -> Result<NodeId>;

    fn param_count(&self, store: &ParamStore) -> usize {
        self.params().iter().map(|&p| store.value(p).len()).sum()
    }
}

/// Sizes shared by all encoder variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderSpec {
    pub input_dim: usize,
    /// Hidden units per LSTM direction.
    pub hidden: usize,
    /// `a`: attention projection size.
    pub attention_dim: usize,
    /// `r`: number of attention aspects.
    pub num_aspects: usize,
}

pub type EncoderFactory = fn(&EncoderSpec, &mut ParamStore, &mut ModelRng) -> Result<Box<dyn SentenceEncoder>>;

pub struct EncoderRegistry {
    factories: BTreeMap<String, EncoderFactory>,
}

impl EncoderRegistry {
    pub fn empty() -> Self {
        EncoderRegistry {
            factories: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, name: impl Into<String>, factory: EncoderFactory) {
        self.factories.insert(name.into(), factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn build(
        &self,
        name: &str,
        spec: &EncoderSpec,
        store: &mut ParamStore,
        rng: &mut ModelRng,
    ) -> Result<Box<dyn SentenceEncoder>> {
        let factory = self.factories.get(name).ok_or_else(|| {
            Error::Config(format!(
                "unknown sentence encoder {name:?} (known: {})",
                self.names().collect::<Vec<_>>().join(", ")
            ))
        })?;
        factory(spec, store, rng)
    }
}

impl Default for EncoderRegistry {
    fn default() -> Self {
        let mut r = Self::empty();
        r.register(SelfAttentionEncoder::NAME, SelfAttentionEncoder::build);
        r.register(LastHiddenEncoder::NAME, LastHiddenEncoder::build);
        r
    }
}

impl fmt::Debug for EncoderRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.factories.keys()).finish()
    }
}
