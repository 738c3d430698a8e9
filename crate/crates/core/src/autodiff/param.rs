use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Handle to a parameter inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A named trainable tensor with its accumulated gradient.
#[derive(Debug, Clone)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    /// Frozen parameters never receive optimizer updates.
    pub trainable: bool,
    /// Row-sparse parameters (embedding tables) track which rows carry
    /// gradient so zeroing and updates touch only those rows.
    pub sparse_rows: bool,
    pub(crate) touched: BTreeSet<usize>,
}

impl Parameter {
    pub fn touched_rows(&self) -> impl Iterator<Item = usize> + '_ {
        self.touched.iter().copied()
    }
}

/// Owns every parameter of a model in registration order.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: Vec<Parameter>,
    by_name: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(Error::InvalidArgument(format!(
                "duplicate parameter name {name}"
            )));
        }
        let id = ParamId(self.params.len());
        let grad = Tensor::zeros(value.shape());
        self.by_name.insert(name.clone(), id);
        self.params.push(Parameter {
            name,
            value,
            grad,
            trainable: true,
            sparse_rows: false,
            touched: BTreeSet::new(),
        });
        Ok(id)
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].grad
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.iter().map(|p| p.name.as_str())
    }

    /// Total number of scalar entries.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn set_trainable(&mut self, id: ParamId, trainable: bool) {
        self.params[id.0].trainable = trainable;
    }

    pub fn set_sparse_rows(&mut self, id: ParamId, sparse: bool) {
        self.params[id.0].sparse_rows = sparse;
    }

    /// Replace a value, keeping the shape.
    pub fn set_value(&mut self, id: ParamId, value: Tensor) -> Result<()> {
        let p = &mut self.params[id.0];
        if p.value.shape() != value.shape() {
            return Err(Error::Shape(format!(
                "{}: expected {:?}, got {:?}",
                p.name,
                p.value.shape(),
                value.shape()
            )));
        }
        p.value = value;
        Ok(())
    }

    /// Add taped gradients into the stored `grad` tensors.
    pub fn accumulate(&mut self, grads: &ParamGrads) {
        for (id, g) in &grads.dense {
            self.params[id.0].grad.add_assign(g);
        }
        for (id, rows) in &grads.rows {
            let p = &mut self.params[id.0];
            let cols = p.value.cols();
            let data = p.grad.data_mut();
            for (&r, g) in rows {
                for (a, b) in data[r * cols..(r + 1) * cols].iter_mut().zip(g) {
                    *a += b;
                }
                p.touched.insert(r);
            }
        }
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            if p.sparse_rows {
                let cols = p.value.cols();
                let data = p.grad.data_mut();
                for &r in &p.touched {
                    data[r * cols..(r + 1) * cols].fill(0.0);
                }
                p.touched.clear();
            } else {
                p.grad.fill(0.0);
            }
        }
    }
}

/// Gradients produced by one backward pass, keyed by parameter.
#[derive(Debug, Clone, Default)]
pub struct ParamGrads {
    pub(crate) dense: BTreeMap<ParamId, Tensor>,
    pub(crate) rows: BTreeMap<ParamId, BTreeMap<usize, Vec<f64>>>,
}

impl ParamGrads {
    /// Dense gradient for `id`, materializing sparse rows if needed.
    pub fn get(&self, id: ParamId, shape: &[usize]) -> Tensor {
        let mut out = self
            .dense
            .get(&id)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(shape));
        if let Some(rows) = self.rows.get(&id) {
            let cols = out.cols();
            let data = out.data_mut();
            for (&r, g) in rows {
                for (a, b) in data[r * cols..(r + 1) * cols].iter_mut().zip(g) {
                    *a += b;
                }
            }
        }
        out
    }

    pub fn is_empty(&self) -> bool {
        self.dense.is_empty() && self.rows.is_empty()
    }
}
