use std::collections::{BTreeMap, HashMap};
use std::fmt;

use crate::autodiff::{ParamGrads, ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};

/// Index of a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

/// A fused operation with a hand-written adjoint.
///
/// `backward` receives the forward inputs, the forward output and the
/// upstream gradient, and returns one optional gradient per input.
pub trait CustomOp: fmt::Debug {
    fn name(&self) -> &str;
    fn backward(
        &self,
        inputs: &[&Tensor],
        output: &Tensor,
        grad_output: &Tensor,
    ) -> Result<Vec<Option<Tensor>>>;
}

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    EmbedColumns { param: ParamId, indices: Vec<usize> },
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    AddColumn(NodeId, NodeId),
    Scale(NodeId, f64),
    Tanh(NodeId),
    Sigmoid(NodeId),
    SoftmaxRows(NodeId),
    LogSumExpRows(NodeId),
    Sum(NodeId),
    Concat(Vec<NodeId>, Axis),
    Flatten(NodeId),
    Transpose(NodeId),
    Column(NodeId, usize),
    Pick(NodeId, Vec<(usize, usize)>),
    Custom(Box<dyn CustomOp>, Vec<NodeId>),
}

/// Concatenation axis: `Rows` stacks vertically, `Cols` side by side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Rows,
    Cols,
}

struct Node {
    op: Op,
    // `None` only for parameter leaves, which read through the store.
    value: Option<Tensor>,
}

/// Records primitive operations so gradients can be replayed in reverse.
///
/// A tape borrows the parameter store immutably; [`Tape::backward`] returns
/// the parameter gradients instead of writing them, and the caller adds
/// them with [`ParamStore::accumulate`]. Accumulating twice without
/// [`ParamStore::zero_grad`] doubles the stored gradients.
pub struct Tape<'s> {
    store: &'s ParamStore,
    nodes: Vec<Node>,
    param_leaves: HashMap<ParamId, NodeId>,
}

impl<'s> Tape<'s> {
    pub fn new(store: &'s ParamStore) -> Self {
        Tape {
            store,
            nodes: Vec::new(),
            param_leaves: HashMap::new(),
        }
    }

    pub fn store(&self) -> &'s ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        let node = &self.nodes[id.0];
        match (&node.value, &node.op) {
            (Some(v), _) => v,
            (None, Op::Param(p)) => self.store.value(*p),
            (None, _) => unreachable!("only parameter leaves omit their value"),
        }
    }

    /// Scalar value of a `1 x 1` node.
    pub fn scalar(&self, id: NodeId) -> Result<f64> {
        self.value(id)
            .scalar()
            .ok_or_else(|| Error::Shape(format!("expected scalar, got {:?}", self.value(id).shape())))
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.nodes.push(Node {
            op,
            value: Some(value),
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Constant, value)
    }

    pub fn param(&mut self, id: ParamId) -> NodeId {
        if let Some(&node) = self.param_leaves.get(&id) {
            return node;
        }
        self.nodes.push(Node {
            op: Op::Param(id),
            value: None,
        });
        let node = NodeId(self.nodes.len() - 1);
        self.param_leaves.insert(id, node);
        node
    }

    /// Columns `indices[j]`-th row of an embedding table (`|V| x d`),
    /// producing `d x n`. Gradients flow back to the selected rows only.
    pub fn embed_columns(&mut self, param: ParamId, indices: &[usize]) -> Result<NodeId> {
        let value = gather_columns(self.store.value(param), indices)?;
        Ok(self.push(
            Op::EmbedColumns {
                param,
                indices: indices.to_vec(),
            },
            value,
        ))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(Op::MatMul(a, b), v))
    }

    fn zip_same(&self, a: NodeId, b: NodeId, what: &str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.dims2() != vb.dims2() {
            return Err(Error::Shape(format!(
                "{what} {:?} vs {:?}",
                va.dims2(),
                vb.dims2()
            )));
        }
        let (r, c) = va.dims2();
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::from_op(r, c, data, what)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.zip_same(a, b, "add", |x, y| x + y)?;
        Ok(self.push(Op::Add(a, b), v))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.zip_same(a, b, "sub", |x, y| x - y)?;
        Ok(self.push(Op::Sub(a, b), v))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.zip_same(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(Op::Mul(a, b), v))
    }

    /// `a (r x c) + b (r x 1)` broadcast over columns.
    pub fn add_column(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        let (r, c) = va.dims2();
        if vb.dims2() != (r, 1) {
            return Err(Error::Shape(format!(
                "add_column {r}x{c} with {:?}",
                vb.dims2()
            )));
        }
        let bias = vb.data();
        let data = va
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x + bias[i / c])
            .collect();
        let v = Tensor::from_op(r, c, data, "add_column")?;
        Ok(self.push(Op::AddColumn(a, b), v))
    }

    /// `w x + b` where `x` may have several columns.
    pub fn affine(&mut self, w: NodeId, x: NodeId, b: NodeId) -> Result<NodeId> {
        let wx = self.matmul(w, x)?;
        self.add_column(wx, b)
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> Result<NodeId> {
        let va = self.value(a);
        let (r, c) = va.dims2();
        let v = Tensor::from_op(r, c, va.data().iter().map(|x| x * factor).collect(), "scale")?;
        Ok(self.push(Op::Scale(a, factor), v))
    }

    fn map(&self, a: NodeId, what: &str, f: impl Fn(f64) -> f64) -> Result<Tensor> {
        let va = self.value(a);
        let (r, c) = va.dims2();
        Tensor::from_op(r, c, va.data().iter().map(|&x| f(x)).collect(), what)
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.map(a, "tanh", f64::tanh)?;
        Ok(self.push(Op::Tanh(a), v))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.map(a, "sigmoid", sigmoid)?;
        Ok(self.push(Op::Sigmoid(a), v))
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> Result<NodeId> {
        let va = self.value(a);
        let (r, c) = va.dims2();
        let mut data = Vec::with_capacity(r * c);
        for i in 0..r {
            data.extend(super::softmax(va.row(i)));
        }
        let v = Tensor::from_op(r, c, data, "softmax_rows")?;
        Ok(self.push(Op::SoftmaxRows(a), v))
    }

    /// Row-wise max-shifted log-sum-exp, `r x c -> r x 1`.
    pub fn logsumexp_rows(&mut self, a: NodeId) -> Result<NodeId> {
        let va = self.value(a);
        let r = va.rows();
        let data = (0..r).map(|i| super::logsumexp(va.row(i))).collect();
        let v = Tensor::from_op(r, 1, data, "logsumexp_rows")?;
        Ok(self.push(Op::LogSumExpRows(a), v))
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        let s = self.value(a).sum();
        let v = Tensor::from_op(1, 1, vec![s], "sum")?;
        Ok(self.push(Op::Sum(a), v))
    }

    pub fn concat(&mut self, xs: &[NodeId], axis: Axis) -> Result<NodeId> {
        if xs.is_empty() {
            return Err(Error::Shape("concat of nothing".into()));
        }
        let dims: Vec<(usize, usize)> = xs.iter().map(|&x| self.value(x).dims2()).collect();
        let v = match axis {
            Axis::Rows => {
                let c = dims[0].1;
                if dims.iter().any(|d| d.1 != c) {
                    return Err(Error::Shape(format!("row concat of {dims:?}")));
                }
                let r: usize = dims.iter().map(|d| d.0).sum();
                let mut data = Vec::with_capacity(r * c);
                for &x in xs {
                    data.extend_from_slice(self.value(x).data());
                }
                Tensor::from_op(r, c, data, "concat")?
            }
            Axis::Cols => {
                let r = dims[0].0;
                if dims.iter().any(|d| d.0 != r) {
                    return Err(Error::Shape(format!("column concat of {dims:?}")));
                }
                let c: usize = dims.iter().map(|d| d.1).sum();
                let mut data = Vec::with_capacity(r * c);
                for i in 0..r {
                    for &x in xs {
                        data.extend_from_slice(self.value(x).row(i));
                    }
                }
                Tensor::from_op(r, c, data, "concat")?
            }
        };
        Ok(self.push(Op::Concat(xs.to_vec(), axis), v))
    }

    /// Row-major flatten into an `(r*c) x 1` column.
    pub fn flatten(&mut self, a: NodeId) -> Result<NodeId> {
        let va = self.value(a);
        let v = Tensor::from_op(va.len(), 1, va.data().to_vec(), "flatten")?;
        Ok(self.push(Op::Flatten(a), v))
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).transpose();
        Ok(self.push(Op::Transpose(a), v))
    }

    /// Column `j` as an `r x 1` matrix.
    pub fn column(&mut self, a: NodeId, j: usize) -> Result<NodeId> {
        let va = self.value(a);
        let (r, c) = va.dims2();
        if j >= c {
            return Err(Error::Shape(format!("column {j} of {r}x{c}")));
        }
        let data = (0..r).map(|i| va.get(i, j)).collect();
        let v = Tensor::from_op(r, 1, data, "column")?;
        Ok(self.push(Op::Column(a, j), v))
    }

    /// Sum of the selected `(row, col)` entries; repeated entries count
    /// repeatedly.
    pub fn pick(&mut self, a: NodeId, entries: &[(usize, usize)]) -> Result<NodeId> {
        let va = self.value(a);
        let (r, c) = va.dims2();
        let mut s = 0.0;
        for &(i, j) in entries {
            if i >= r || j >= c {
                return Err(Error::Shape(format!("pick ({i},{j}) from {r}x{c}")));
            }
            s += va.get(i, j);
        }
        let v = Tensor::from_op(1, 1, vec![s], "pick")?;
        Ok(self.push(Op::Pick(a, entries.to_vec()), v))
    }

    /// Record a fused operation whose forward value was computed by the
    /// caller.
    pub fn custom(&mut self, op: Box<dyn CustomOp>, inputs: &[NodeId], value: Tensor) -> NodeId {
        self.push(Op::Custom(op, inputs.to_vec()), value)
    }

    /// Reverse sweep from a scalar `loss`, visiting nodes in exact reverse
    /// recording order.
    pub fn backward(&self, loss: NodeId) -> Result<ParamGrads> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::Shape(format!(
                "backward needs a scalar loss, got {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(&[1, 1], 1.0));
        let mut out = ParamGrads::default();

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Constant => {}
                Op::Param(p) => {
                    let shape = self.store.value(*p).shape().to_vec();
                    let g = reshape(g, &shape);
                    match out.dense.get_mut(p) {
                        Some(acc) => acc.add_assign(&g),
                        None => {
                            out.dense.insert(*p, g);
                        }
                    }
                }
                Op::EmbedColumns { param, indices } => {
                    let rows = out.rows.entry(*param).or_insert_with(BTreeMap::new);
                    let (d, n) = g.dims2();
                    for (j, &tok) in indices.iter().enumerate().take(n) {
                        let acc = rows.entry(tok).or_insert_with(|| vec![0.0; d]);
                        for (k, a) in acc.iter_mut().enumerate() {
                            *a += g.get(k, j);
                        }
                    }
                }
                Op::MatMul(a, b) => {
                    let ga = g.matmul(&self.value(*b).transpose())?;
                    let gb = self.value(*a).transpose().matmul(&g)?;
                    add_grad(&mut grads, *a, ga);
                    add_grad(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    add_grad(&mut grads, *b, g.clone());
                    add_grad(&mut grads, *a, g);
                }
                Op::Sub(a, b) => {
                    let mut neg = g.clone();
                    neg.scale_assign(-1.0);
                    add_grad(&mut grads, *b, neg);
                    add_grad(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let ga = elementwise(&g, self.value(*b), |x, y| x * y);
                    let gb = elementwise(&g, self.value(*a), |x, y| x * y);
                    add_grad(&mut grads, *a, ga);
                    add_grad(&mut grads, *b, gb);
                }
                Op::AddColumn(a, b) => {
                    let r = g.rows();
                    let gb: Vec<f64> = (0..r).map(|i| g.row(i).iter().sum()).collect();
                    add_grad(&mut grads, *b, raw(r, 1, gb));
                    add_grad(&mut grads, *a, g);
                }
                Op::Scale(a, factor) => {
                    let mut ga = g;
                    ga.scale_assign(*factor);
                    add_grad(&mut grads, *a, ga);
                }
                Op::Tanh(a) => {
                    let y = node.value.as_ref().expect("tanh value");
                    let ga = elementwise(&g, y, |gv, yv| gv * (1.0 - yv * yv));
                    add_grad(&mut grads, *a, ga);
                }
                Op::Sigmoid(a) => {
                    let y = node.value.as_ref().expect("sigmoid value");
                    let ga = elementwise(&g, y, |gv, yv| gv * yv * (1.0 - yv));
                    add_grad(&mut grads, *a, ga);
                }
                Op::SoftmaxRows(a) => {
                    let y = node.value.as_ref().expect("softmax value");
                    let (r, c) = y.dims2();
                    let mut data = vec![0.0; r * c];
                    for i in 0..r {
                        let dot: f64 = g.row(i).iter().zip(y.row(i)).map(|(a, b)| a * b).sum();
                        for j in 0..c {
                            data[i * c + j] = y.get(i, j) * (g.get(i, j) - dot);
                        }
                    }
                    add_grad(&mut grads, *a, raw(r, c, data));
                }
                Op::LogSumExpRows(a) => {
                    let va = self.value(*a);
                    let (r, c) = va.dims2();
                    let mut data = Vec::with_capacity(r * c);
                    for i in 0..r {
                        let gi = g.data()[i];
                        data.extend(super::softmax(va.row(i)).into_iter().map(|p| gi * p));
                    }
                    add_grad(&mut grads, *a, raw(r, c, data));
                }
                Op::Sum(a) => {
                    let (r, c) = self.value(*a).dims2();
                    add_grad(&mut grads, *a, raw(r, c, vec![g.data()[0]; r * c]));
                }
                Op::Concat(xs, axis) => match axis {
                    Axis::Rows => {
                        let c = g.cols();
                        let mut offset = 0;
                        for &x in xs {
                            let r = self.value(x).rows();
                            let part = g.data()[offset * c..(offset + r) * c].to_vec();
                            add_grad(&mut grads, x, raw(r, c, part));
                            offset += r;
                        }
                    }
                    Axis::Cols => {
                        let (r, _) = g.dims2();
                        let mut offset = 0;
                        for &x in xs {
                            let c = self.value(x).cols();
                            let mut part = Vec::with_capacity(r * c);
                            for i in 0..r {
                                part.extend_from_slice(&g.row(i)[offset..offset + c]);
                            }
                            add_grad(&mut grads, x, raw(r, c, part));
                            offset += c;
                        }
                    }
                },
                Op::Flatten(a) => {
                    let (r, c) = self.value(*a).dims2();
                    add_grad(&mut grads, *a, raw(r, c, g.into_data()));
                }
                Op::Transpose(a) => add_grad(&mut grads, *a, g.transpose()),
                Op::Column(a, j) => {
                    let (r, c) = self.value(*a).dims2();
                    let mut data = vec![0.0; r * c];
                    for i in 0..r {
                        data[i * c + j] = g.data()[i];
                    }
                    add_grad(&mut grads, *a, raw(r, c, data));
                }
                Op::Pick(a, entries) => {
                    let (r, c) = self.value(*a).dims2();
                    let mut data = vec![0.0; r * c];
                    for &(i, j) in entries {
                        data[i * c + j] += g.data()[0];
                    }
                    add_grad(&mut grads, *a, raw(r, c, data));
                }
                Op::Custom(op, inputs) => {
                    let vals: Vec<&Tensor> = inputs.iter().map(|&i| self.value(i)).collect();
                    let out_val = node.value.as_ref().expect("custom value");
                    let gs = op.backward(&vals, out_val, &g)?;
                    if gs.len() != inputs.len() {
                        return Err(Error::Shape(format!(
                            "{} returned {} gradients for {} inputs",
                            op.name(),
                            gs.len(),
                            inputs.len()
                        )));
                    }
                    for (&i, gi) in inputs.iter().zip(gs) {
                        if let Some(gi) = gi {
                            add_grad(&mut grads, i, gi);
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn gather_columns(table: &Tensor, indices: &[usize]) -> Result<Tensor> {
    let (v, d) = table.dims2();
    if indices.is_empty() {
        return Err(Error::Shape("embedding lookup of an empty sequence".into()));
    }
    let n = indices.len();
    let mut data = vec![0.0; d * n];
    for (j, &tok) in indices.iter().enumerate() {
        if tok >= v {
            return Err(Error::InvalidArgument(format!(
                "token index {tok} out of range for vocabulary of {v}"
            )));
        }
        for (k, &x) in table.row(tok).iter().enumerate() {
            data[k * n + j] = x;
        }
    }
    Tensor::from_op(d, n, data, "embed")
}

fn raw(r: usize, c: usize, data: Vec<f64>) -> Tensor {
    Tensor::unchecked(r, c, data)
}

fn reshape(t: Tensor, shape: &[usize]) -> Tensor {
    if t.shape() == shape {
        return t;
    }
    let mut out = Tensor::zeros(shape);
    out.data_mut().copy_from_slice(t.data());
    out
}

fn elementwise(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let (r, c) = a.dims2();
    raw(r, c, a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect())
}

fn add_grad(grads: &mut [Option<Tensor>], id: NodeId, g: Tensor) {
    match &mut grads[id.0] {
        Some(acc) => acc.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}
