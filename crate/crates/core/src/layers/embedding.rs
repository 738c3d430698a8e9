use serde::{Deserialize, Serialize};

use crate::autodiff::{NodeId, ParamId, ParamStore, Tape, Tensor};
use crate::error::{Error, Result};

/// How the word-embedding matrix is initialized and whether it trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingMode {
    /// Pretrained vectors, never updated.
    PretrainedFrozen,
    /// Pretrained vectors, tuned jointly with the model.
    PretrainedFinetune,
    /// Glorot-initialized vectors, learned from scratch.
    RandomFinetune,
}

impl EmbeddingMode {
    pub fn is_trainable(self) -> bool {
        !matches!(self, EmbeddingMode::PretrainedFrozen)
    }

    pub fn needs_pretrained(self) -> bool {
        !matches!(self, EmbeddingMode::RandomFinetune)
    }
}

#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    pub matrix: ParamId,
    pub mode: EmbeddingMode,
    dim: usize,
    vocab_size: usize,
}

impl EmbeddingTable {
    pub fn new(store: &mut ParamStore, name: &str, matrix: Tensor, mode: EmbeddingMode) -> Result<Self> {
        let (vocab_size, dim) = match matrix.shape() {
            [v, d] => (*v, *d),
            s => return Err(Error::Shape(format!("embedding matrix must be |V| x d, got {s:?}"))),
        };
        let id = store.add(name, matrix)?;
        store.set_trainable(id, mode.is_trainable());
        store.set_sparse_rows(id, true);
        Ok(EmbeddingTable {
            matrix: id,
            mode,
            dim,
            vocab_size,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    /// `d x n` matrix whose columns are the embeddings of `indices`.
    /// Frozen tables are recorded as constants, so no gradient reaches them.
    pub fn embed(&self, tape: &mut Tape, indices: &[usize]) -> Result<NodeId> {
        if self.mode.is_trainable() {
            return tape.embed_columns(self.matrix, indices);
        }
        let table = tape.store().value(self.matrix);
        let n = indices.len();
        if n == 0 {
            return Err(Error::Shape("embedding lookup of an empty sequence".into()));
        }
        let mut data = vec![0.0; self.dim * n];
        for (j, &tok) in indices.iter().enumerate() {
            if tok >= self.vocab_size {
                return Err(Error::InvalidArgument(format!(
                    "token index {tok} out of range for vocabulary of {}",
                    self.vocab_size
                )));
            }
            for (k, &x) in table.row(tok).iter().enumerate() {
                data[k * n + j] = x;
            }
        }
        Ok(tape.constant(Tensor::matrix(self.dim, n, data)?))
    }
}
