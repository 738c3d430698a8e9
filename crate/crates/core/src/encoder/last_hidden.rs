use crate::autodiff::{Axis, NodeId, ParamId, ParamStore, Tape};
use crate::encoder::{EncoderSpec, SentenceEncoder};
use crate::error::Result;
use crate::layers::BlstmParams;
use crate::ModelRng;

/// Attention-free ablation: the sentence vector is the final forward
/// state concatenated with the final backward state.
#[derive(Debug, Clone)]
pub struct LastHiddenEncoder {
    pub blstm: BlstmParams,
}

impl LastHiddenEncoder {
    pub const NAME: &'static str = "last-hidden";

    pub fn build(spec: &EncoderSpec, store: &mut ParamStore, rng: &mut ModelRng) -> Result<Box<dyn SentenceEncoder>> {
        let blstm = BlstmParams::new(store, "encoder.blstm", spec.input_dim, spec.hidden, rng)?;
        Ok(Box::new(LastHiddenEncoder { blstm }))
    }
}

impl SentenceEncoder for LastHiddenEncoder {
    fn name(&self) -> &'static str {
        Self::NAME
    }

    fn output_dim(&self) -> usize {
        self.blstm.output_dim()
    }

    fn params(&self) -> Vec<ParamId> {
        self.blstm.params()
    }

    fn encode(&self, tape: &mut Tape, embedded: NodeId) -> Result<NodeId> {
        let out = self.blstm.forward(tape, embedded)?;
        tape.concat(&[out.last_forward, out.last_backward], Axis::Rows)
    }
}
