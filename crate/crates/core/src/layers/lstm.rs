use rand::Rng;

use crate::autodiff::{Axis, NodeId, ParamId, ParamStore, Tape, Tensor};
use crate::error::{Error, Result};
use crate::layers::glorot_init;

/// Input weights, recurrent weights and bias for one gate.
#[derive(Debug, Clone, Copy)]
pub struct Gate {
    pub input: ParamId,
    pub recurrent: ParamId,
    pub bias: ParamId,
}

/// One direction of a standard LSTM (no peepholes).
///
/// ```text
/// i = σ(W_i x + U_i h + b_i)    f = σ(W_f x + U_f h + b_f)
/// o = σ(W_o x + U_o h + b_o)    g = tanh(W_g x + U_g h + b_g)
/// c' = f ⊙ c + i ⊙ g            h' = o ⊙ tanh(c')
/// ```
#[derive(Debug, Clone)]
pub struct LstmParams {
    pub input_gate: Gate,
    pub forget_gate: Gate,
    pub output_gate: Gate,
    pub candidate: Gate,
    pub input_dim: usize,
    pub hidden: usize,
}

impl LstmParams {
    /// Glorot weights, zero biases except the forget gate at 1.0.
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        input_dim: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut gate = |name: &str, bias: f64| -> Result<Gate> {
            Ok(Gate {
                input: store.add(format!("{prefix}.W_{name}"), glorot_init(&[hidden, input_dim], rng))?,
                recurrent: store.add(format!("{prefix}.U_{name}"), glorot_init(&[hidden, hidden], rng))?,
                bias: store.add(format!("{prefix}.b_{name}"), Tensor::filled(&[hidden], bias))?,
            })
        };
        Ok(LstmParams {
            input_gate: gate("i", 0.0)?,
            forget_gate: gate("f", 1.0)?,
            output_gate: gate("o", 0.0)?,
            candidate: gate("g", 0.0)?,
            input_dim,
            hidden,
        })
    }

    pub fn gates(&self) -> [Gate; 4] {
        [self.input_gate, self.forget_gate, self.output_gate, self.candidate]
    }

    pub fn params(&self) -> Vec<ParamId> {
        self.gates()
            .iter()
            .flat_map(|g| [g.input, g.recurrent, g.bias])
            .collect()
    }

    fn preactivation(&self, tape: &mut Tape, gate: Gate, x: NodeId, h: NodeId) -> Result<NodeId> {
        let w = tape.param(gate.input);
        let u = tape.param(gate.recurrent);
        let b = tape.param(gate.bias);
        let wx = tape.matmul(w, x)?;
        let uh = tape.matmul(u, h)?;
        let s = tape.add(wx, uh)?;
        tape.add_column(s, b)
    }

    /// One recurrence step on column vectors; returns `(h_t, c_t)`.
    pub fn step(&self, tape: &mut Tape, x: NodeId, h_prev: NodeId, c_prev: NodeId) -> Result<(NodeId, NodeId)> {
        let dims = [tape.value(x).dims2(), tape.value(h_prev).dims2(), tape.value(c_prev).dims2()];
        if dims != [(self.input_dim, 1), (self.hidden, 1), (self.hidden, 1)] {
            return Err(Error::Shape(format!(
                "lstm step expects x {}x1, h/c {}x1; got {dims:?}",
                self.input_dim, self.hidden
            )));
        }
        let i = self.preactivation(tape, self.input_gate, x, h_prev)?;
        let i = tape.sigmoid(i)?;
        let f = self.preactivation(tape, self.forget_gate, x, h_prev)?;
        let f = tape.sigmoid(f)?;
        let o = self.preactivation(tape, self.output_gate, x, h_prev)?;
        let o = tape.sigmoid(o)?;
        let g = self.preactivation(tape, self.candidate, x, h_prev)?;
        let g = tape.tanh(g)?;
        let keep = tape.mul(f, c_prev)?;
        let write = tape.mul(i, g)?;
        let c = tape.add(keep, write)?;
        let squashed = tape.tanh(c)?;
        let h = tape.mul(o, squashed)?;
        Ok((h, c))
    }

    /// Hidden states for each column of `xs`, in processing order.
    fn run(&self, tape: &mut Tape, columns: &[NodeId]) -> Result<Vec<NodeId>> {
        let mut h = tape.constant(Tensor::zeros(&[self.hidden, 1]));
        let mut c = tape.constant(Tensor::zeros(&[self.hidden, 1]));
        let mut out = Vec::with_capacity(columns.len());
        for &x in columns {
            (h, c) = self.step(tape, x, h, c)?;
            out.push(h);
        }
        Ok(out)
    }
}

/// Forward and backward LSTMs sharing input dim and hidden size.
#[derive(Debug, Clone)]
pub struct BlstmParams {
    pub forward: LstmParams,
    pub backward: LstmParams,
}

/// Output of [`BlstmParams::forward`].
#[derive(Debug, Clone, Copy)]
pub struct BlstmOutput {
    /// `2*hidden x n`; column `i` is `[h_fwd_i; h_bwd_i]`.
    pub states: NodeId,
    /// Forward state after the last position.
    pub last_forward: NodeId,
    /// Backward state after consuming the whole reversed sequence, i.e. at
    /// position 0.
    pub last_backward: NodeId,
}

impl BlstmParams {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        input_dim: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(BlstmParams {
            forward: LstmParams::new(store, &format!("{prefix}.fwd"), input_dim, hidden, rng)?,
            backward: LstmParams::new(store, &format!("{prefix}.bwd"), input_dim, hidden, rng)?,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.forward.input_dim
    }

    pub fn hidden(&self) -> usize {
        self.forward.hidden
    }

    /// Output dimension per position, `2 * hidden`.
    pub fn output_dim(&self) -> usize {
        2 * self.forward.hidden
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut p = self.forward.params();
        p.extend(self.backward.params());
        p
    }

    /// Run both directions over the columns of `xs` (`input_dim x n`).
    pub fn forward(&self, tape: &mut Tape, xs: NodeId) -> Result<BlstmOutput> {
        let (rows, n) = tape.value(xs).dims2();
        if n == 0 {
            return Err(Error::Shape("blstm over an empty sequence".into()));
        }
        if rows != self.input_dim() {
            return Err(Error::Shape(format!(
                "blstm expects inputs of {} rows, got {rows}",
                self.input_dim()
            )));
        }
        let columns = (0..n)
            .map(|j| tape.column(xs, j))
            .collect::<Result<Vec<_>>>()?;
        let fwd = self.forward.run(tape, &columns)?;
        let reversed: Vec<NodeId> = columns.iter().rev().copied().collect();
        let mut bwd = self.backward.run(tape, &reversed)?;
        let last_backward = *bwd.last().expect("n >= 1");
        bwd.reverse();
        let fwd_mat = tape.concat(&fwd, Axis::Cols)?;
        let bwd_mat = tape.concat(&bwd, Axis::Cols)?;
        let states = tape.concat(&[fwd_mat, bwd_mat], Axis::Rows)?;
        Ok(BlstmOutput {
            states,
            last_forward: *fwd.last().expect("n >= 1"),
            last_backward,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::grad_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
        Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap()
    }

    #[test]
    fn zero_weights_give_zero_hidden() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let lstm = LstmParams::new(&mut store, "l", 3, 2, &mut rng).unwrap();
        for p in lstm.params() {
            let shape = store.value(p).shape().to_vec();
            store.set_value(p, Tensor::zeros(&shape)).unwrap();
        }
        let mut tape = Tape::new(&store);
        let x = tape.constant(Tensor::column(vec![5.0, -3.0, 1.0]).unwrap());
        let h0 = tape.constant(Tensor::zeros(&[2, 1]));
        let c0 = tape.constant(Tensor::zeros(&[2, 1]));
        let (h, _) = lstm.step(&mut tape, x, h0, c0).unwrap();
        assert_eq!(tape.value(h).data(), &[0.0, 0.0]);
    }

    #[test]
    fn forget_bias_starts_at_one() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let lstm = LstmParams::new(&mut store, "l", 3, 4, &mut rng).unwrap();
        assert_eq!(store.value(lstm.forget_gate.bias).data(), &[1.0; 4]);
        assert_eq!(store.value(lstm.input_gate.bias).data(), &[0.0; 4]);
    }

    #[test]
    fn saturated_gates_preserve_cell() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let lstm = LstmParams::new(&mut store, "l", 2, 2, &mut rng).unwrap();
        for g in lstm.gates() {
            for p in [g.input, g.recurrent] {
                let shape = store.value(p).shape().to_vec();
                store.set_value(p, Tensor::zeros(&shape)).unwrap();
            }
        }
        store.set_value(lstm.forget_gate.bias, Tensor::filled(&[2], 40.0)).unwrap();
        store.set_value(lstm.input_gate.bias, Tensor::filled(&[2], -40.0)).unwrap();
        let mut tape = Tape::new(&store);
        let x = tape.constant(Tensor::column(vec![1.0, -1.0]).unwrap());
        let h0 = tape.constant(Tensor::column(vec![0.3, 0.1]).unwrap());
        let c0 = tape.constant(Tensor::column(vec![0.25, -0.5]).unwrap());
        let (_, c) = lstm.step(&mut tape, x, h0, c0).unwrap();
        for (a, b) in tape.value(c).data().iter().zip([0.25, -0.5]) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn step_rejects_bad_dims() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let lstm = LstmParams::new(&mut store, "l", 3, 2, &mut rng).unwrap();
        let mut tape = Tape::new(&store);
        let x = tape.constant(Tensor::zeros(&[2, 1]));
        let h = tape.constant(Tensor::zeros(&[2, 1]));
        assert!(lstm.step(&mut tape, x, h, h).is_err());
    }

    #[test]
    fn blstm_shapes_and_single_step() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let blstm = BlstmParams::new(&mut store, "b", 3, 4, &mut rng).unwrap();
        let xs1 = random_matrix(3, 1, &mut rng);
        for n in 1..6 {
            let mut tape = Tape::new(&store);
            let xs = tape.constant(random_matrix(3, n, &mut rng));
            let out = blstm.forward(&mut tape, xs).unwrap();
            assert_eq!(tape.value(out.states).dims2(), (8, n));
        }
        let mut tape = Tape::new(&store);
        let xs = tape.constant(xs1.clone());
        let out = blstm.forward(&mut tape, xs).unwrap();
        let h0 = tape.constant(Tensor::zeros(&[4, 1]));
        let x = tape.constant(xs1);
        let (hf, _) = blstm.forward.step(&mut tape, x, h0, h0).unwrap();
        let (hb, _) = blstm.backward.step(&mut tape, x, h0, h0).unwrap();
        let mut expected = tape.value(hf).data().to_vec();
        expected.extend_from_slice(tape.value(hb).data());
        assert_eq!(tape.value(out.states).data(), expected.as_slice());
    }

    #[test]
    fn palindrome_with_tied_directions_is_mirror_symmetric() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let blstm = BlstmParams::new(&mut store, "b", 2, 3, &mut rng).unwrap();
        for (f, b) in blstm.forward.params().into_iter().zip(blstm.backward.params()) {
            let v = store.value(f).clone();
            store.set_value(b, v).unwrap();
        }
        let cols = [[0.5, -1.0], [1.5, 0.2], [-0.7, 0.9], [1.5, 0.2], [0.5, -1.0]];
        let n = cols.len();
        let data: Vec<f64> = (0..2).flat_map(|r| cols.iter().map(move |c| c[r])).collect();
        let mut tape = Tape::new(&store);
        let xs = tape.constant(Tensor::matrix(2, n, data).unwrap());
        let states = blstm.forward(&mut tape, xs).unwrap().states;
        let h = tape.value(states).clone();
        // Reversing positions and swapping halves maps H onto itself.
        for j in 0..n {
            for k in 0..3 {
                assert!((h.get(k, j) - h.get(3 + k, n - 1 - j)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn blstm_rejects_wrong_input_rows() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let blstm = BlstmParams::new(&mut store, "b", 3, 2, &mut rng).unwrap();
        let mut tape = Tape::new(&store);
        let xs = tape.constant(Tensor::zeros(&[2, 4]));
        assert!(blstm.forward(&mut tape, xs).is_err());
    }

    #[test]
    fn lstm_step_gradients_match_finite_differences() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let lstm = LstmParams::new(&mut store, "l", 3, 2, &mut rng).unwrap();
        let x = random_matrix(3, 1, &mut rng);
        let h0 = random_matrix(2, 1, &mut rng);
        let c0 = random_matrix(2, 1, &mut rng);
        let params = lstm.params();
        let err = grad_check(&mut store, &params, 1e-5, |tape| {
            let x = tape.constant(x.clone());
            let h0 = tape.constant(h0.clone());
            let c0 = tape.constant(c0.clone());
            let (h, c) = lstm.step(tape, x, h0, c0)?;
            let both = tape.concat(&[h, c], Axis::Rows)?;
            let t = tape.tanh(both)?;
            let sq = tape.mul(t, both)?;
            tape.sum(sq)
        })
        .unwrap();
        assert!(err < 1e-4, "relative error {err}");
    }
}
