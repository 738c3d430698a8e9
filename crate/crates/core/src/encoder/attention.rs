use crate::autodiff::{NodeId, ParamId, ParamStore, Tape};
use crate::encoder::{EncoderSpec, SentenceEncoder};
use crate::error::{Error, Result};
use crate::layers::{glorot_init, BlstmParams};
use crate::ModelRng;

/// Projection `W_m1` (`a x u`) and aspect matrix `W_m2` (`r x a`).
#[derive(Debug, Clone)]
pub struct AttentionParams {
    pub projection: ParamId,
    pub aspects: ParamId,
    pub attention_dim: usize,
    pub num_aspects: usize,
    pub input_dim: usize,
}

impl AttentionParams {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        input_dim: usize,
        attention_dim: usize,
        num_aspects: usize,
        rng: &mut ModelRng,
    ) -> Result<Self> {
        if attention_dim == 0 || num_aspects == 0 {
            return Err(Error::Config("attention sizes a and r must be >= 1".into()));
        }
        Ok(AttentionParams {
            projection: store.add(format!("{prefix}.W_m1"), glorot_init(&[attention_dim, input_dim], rng))?,
            aspects: store.add(format!("{prefix}.W_m2"), glorot_init(&[num_aspects, attention_dim], rng))?,
            attention_dim,
            num_aspects,
            input_dim,
        })
    }

    pub fn params(&self) -> [ParamId; 2] {
        [self.projection, self.aspects]
    }
}

/// `A = softmax_rows(W_m2 tanh(W_m1 H))`, one distribution over the `n`
/// positions per aspect row.
pub fn attention_matrix(tape: &mut Tape, params: &AttentionParams, states: NodeId) -> Result<NodeId> {
    let u = tape.value(states).rows();
    if u != params.input_dim {
        return Err(Error::Shape(format!(
            "attention expects {} state rows, got {u}",
            params.input_dim
        )));
    }
    let w1 = tape.param(params.projection);
    let w2 = tape.param(params.aspects);
    let proj = tape.matmul(w1, states)?;
    let act = tape.tanh(proj)?;
    let logits = tape.matmul(w2, act)?;
    tape.softmax_rows(logits)
}

/// `S = A Hᵀ` (`r x u`): row `k` is the aspect-`k` weighted combination of
/// the hidden states.
pub fn sentence_matrix(tape: &mut Tape, attention: NodeId, states: NodeId) -> Result<NodeId> {
    let ht = tape.transpose(states)?;
    tape.matmul(attention, ht)
}

#[derive(Debug, Clone)]
pub struct SelfAttentionEncoder {
    pub blstm: BlstmParams,
    pub attention: AttentionParams,
}

impl SelfAttentionEncoder {
    pub const NAME: &'static str = "self-attention";

    pub fn build(spec: &EncoderSpec, store: &mut ParamStore, rng: &mut ModelRng) -> Result<Box<dyn SentenceEncoder>> {
        let blstm = BlstmParams::new(store, "encoder.blstm", spec.input_dim, spec.hidden, rng)?;
        let attention = AttentionParams::new(
            store,
            "encoder.attention",
            blstm.output_dim(),
            spec.attention_dim,
            spec.num_aspects,
            rng,
        )?;
        Ok(Box::new(SelfAttentionEncoder { blstm, attention }))
    }
}

impl SentenceEncoder for SelfAttentionEncoder {
    fn name(&self) -> &'static str {
        Self::NAME
    }

    fn output_dim(&self) -> usize {
        self.attention.num_aspects * self.blstm.output_dim()
    }

    fn params(&self) -> Vec<ParamId> {
        let mut p = self.blstm.params();
        p.extend(self.attention.params());
        p
    }

    fn encode(&self, tape: &mut Tape, embedded: NodeId) -> Result<NodeId> {
        let states = self.blstm.forward(tape, embedded)?.states;
        let a = attention_matrix(tape, &self.attention, states)?;
        let s = sentence_matrix(tape, a, states)?;
        tape.flatten(s)
    }
}
