use crate::autodiff::{Axis, NodeId, ParamId, ParamStore, Tape};
use crate::error::{Error, Result};
use crate::layers::{BlstmParams, Dense};
use crate::ModelRng;

/// Document-level BLSTM over sentence vectors followed by a one-hidden-layer
/// tanh network producing one raw score per label.
#[derive(Debug, Clone)]
pub struct EmissionNet {
    pub blstm: BlstmParams,
    pub hidden: Dense,
    pub output: Dense,
}

impl EmissionNet {
    pub fn new(
        store: &mut ParamStore,
        input_dim: usize,
        doc_hidden: usize,
        emission_hidden: usize,
        num_labels: usize,
        rng: &mut ModelRng,
    ) -> Result<Self> {
        let blstm = BlstmParams::new(store, "doc.blstm", input_dim, doc_hidden, rng)?;
        let hidden = Dense::new(store, "doc.hidden", blstm.output_dim(), emission_hidden, rng)?;
        let output = Dense::new(store, "doc.output", emission_hidden, num_labels, rng)?;
        Ok(EmissionNet { blstm, hidden, output })
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut p = self.blstm.params();
        p.extend(self.hidden.params());
        p.extend(self.output.params());
        p
    }

    pub fn num_labels(&self) -> usize {
        self.output.output_dim
    }

    /// Document-BLSTM states (`2h' x m`) for `m` sentence columns.
    pub fn document_states(&self, tape: &mut Tape, sentence_vectors: &[NodeId]) -> Result<NodeId> {
        if sentence_vectors.is_empty() {
            return Err(Error::InvalidArgument("cannot score an empty document".into()));
        }
        let xs = tape.concat(sentence_vectors, Axis::Cols)?;
        Ok(self.blstm.forward(tape, xs)?.states)
    }

    /// Raw scores `m x K` from document-BLSTM states.
    pub fn scores_from_states(&self, tape: &mut Tape, states: NodeId) -> Result<NodeId> {
        let h = self.hidden.forward(tape, states)?;
        let h = tape.tanh(h)?;
        let r = self.output.forward(tape, h)?;
        tape.transpose(r)
    }

    /// Raw emission scores `m x K`, one row per sentence.
    pub fn emit_scores(&self, tape: &mut Tape, sentence_vectors: &[NodeId]) -> Result<NodeId> {
        let states = self.document_states(tape, sentence_vectors)?;
        self.scores_from_states(tape, states)
    }
}
