use rand::Rng;

use crate::autodiff::{NodeId, ParamId, ParamStore, Tape, Tensor};
use crate::error::Result;
use crate::layers::glorot_init;

/// `y = W x + b`, applied column-wise.
#[derive(Debug, Clone)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input_dim: usize,
    pub output_dim: usize,
}

impl Dense {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        input_dim: usize,
        output_dim: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let weight = store.add(format!("{prefix}.W"), glorot_init(&[output_dim, input_dim], rng))?;
        let bias = store.add(format!("{prefix}.b"), Tensor::zeros(&[output_dim]))?;
        Ok(Dense {
            weight,
            bias,
            input_dim,
            output_dim,
        })
    }

    pub fn forward(&self, tape: &mut Tape, x: NodeId) -> Result<NodeId> {
        let w = tape.param(self.weight);
        let b = tape.param(self.bias);
        tape.affine(w, x, b)
    }

    pub fn params(&self) -> [ParamId; 2] {
        [self.weight, self.bias]
    }
}

/// Inverted dropout: zero each entry with probability `rate` and scale the
/// survivors by `1 / (1 - rate)`. Identity when `rate == 0`.
pub fn dropout(tape: &mut Tape, x: NodeId, rate: f64, rng: &mut impl Rng) -> Result<NodeId> {
    if rate <= 0.0 {
        return Ok(x);
    }
    let (r, c) = tape.value(x).dims2();
    let keep = 1.0 / (1.0 - rate);
    let mask = (0..r * c)
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect();
    let mask = tape.constant(Tensor::matrix(r, c, mask)?);
    tape.mul(x, mask)
}
