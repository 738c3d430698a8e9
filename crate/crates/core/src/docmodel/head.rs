use std::collections::BTreeMap;
use std::fmt;

use crate::autodiff::{softmax, NodeId, ParamId, ParamStore, Tape, Tensor};
use crate::docmodel::crf::{crf_nll, viterbi_decode, CrfParams};
use crate::docmodel::rules::{constrained_decode, OrderRules};
use crate::error::{Error, Result};

/// Turns emission scores into a training loss and a decoded label sequence.
pub trait SequenceHead: fmt::Debug + Send + Sync {
    fn name(&self) -> &'static str;

    fn params(&self) -> Vec<ParamId>;

    /// Scalar loss for raw emissions `m x K` against gold label indices.
    fn loss(&self, tape: &mut Tape, emissions: NodeId, gold: &[usize]) -> Result<NodeId>;

    fn decode(&self, store: &ParamStore, emissions: &Tensor) -> Result<Vec<usize>>;

    /// Learned transition potentials, when the head has them.
    fn crf(&self) -> Option<&CrfParams> {
        None
    }
}

#[derive(Debug, Clone)]
pub struct HeadSpec {
    pub num_labels: usize,
    pub start_end: bool,
    pub rules: OrderRules,
}

/// Row-wise softmax of raw scores.
pub fn softmax_rows(emissions: &Tensor) -> Tensor {
    let (m, k) = emissions.dims2();
    let data = (0..m).flat_map(|i| softmax(emissions.row(i))).collect();
    Tensor::matrix(m, k, data).expect("softmax of finite scores is finite")
}

/// Summed per-sentence cross-entropy of softmax(emissions) against gold.
pub fn cross_entropy(tape: &mut Tape, emissions: NodeId, gold: &[usize]) -> Result<NodeId> {
    let (m, k) = tape.value(emissions).dims2();
    if gold.len() != m {
        return Err(Error::Shape(format!("{} labels for {m} emission rows", gold.len())));
    }
    if gold.iter().any(|&y| y >= k) {
        return Err(Error::InvalidArgument("label index out of range".into()));
    }
    let lse = tape.logsumexp_rows(emissions)?;
    let norm = tape.sum(lse)?;
    let entries: Vec<(usize, usize)> = gold.iter().copied().enumerate().collect();
    let picked = tape.pick(emissions, &entries)?;
    tape.sub(norm, picked)
}

/// Linear-chain CRF trained by negative log-likelihood, Viterbi decoding.
#[derive(Debug, Clone)]
pub struct CrfHead {
    pub crf: CrfParams,
}

impl CrfHead {
    pub const NAME: &'static str = "crf";

    pub fn build(spec: &HeadSpec, store: &mut ParamStore) -> Result<Box<dyn SequenceHead>> {
        let crf = CrfParams::new(store, "crf", spec.num_labels, spec.start_end)?;
        Ok(Box::new(CrfHead { crf }))
    }
}

impl SequenceHead for CrfHead {
    fn name(&self) -> &'static str {
        Self::NAME
    }

    fn params(&self) -> Vec<ParamId> {
        self.crf.params()
    }

    fn loss(&self, tape: &mut Tape, emissions: NodeId, gold: &[usize]) -> Result<NodeId> {
        crf_nll(tape, emissions, gold, &self.crf)
    }

    fn decode(&self, store: &ParamStore, emissions: &Tensor) -> Result<Vec<usize>> {
        viterbi_decode(emissions, &self.crf.scores(store))
    }

    fn crf(&self) -> Option<&CrfParams> {
        Some(&self.crf)
    }
}

/// No learned transitions: per-sentence cross-entropy for training, hard
/// order rules over softmaxed scores for decoding.
#[derive(Debug, Clone)]
pub struct RulesHead {
    pub rules: OrderRules,
}

impl RulesHead {
    pub const NAME: &'static str = "rules";

    pub fn build(spec: &HeadSpec, _store: &mut ParamStore) -> Result<Box<dyn SequenceHead>> {
        spec.rules.validate()?;
        if spec.rules.num_labels() != spec.num_labels {
            return Err(Error::Config("rule matrix size does not match label count".into()));
        }
        Ok(Box::new(RulesHead {
            rules: spec.rules.clone(),
        }))
    }
}

impl SequenceHead for RulesHead {
    fn name(&self) -> &'static str {
        Self::NAME
    }

    fn params(&self) -> Vec<ParamId> {
        Vec::new()
    }

    fn loss(&self, tape: &mut Tape, emissions: NodeId, gold: &[usize]) -> Result<NodeId> {
        cross_entropy(tape, emissions, gold)
    }

    fn decode(&self, _store: &ParamStore, emissions: &Tensor) -> Result<Vec<usize>> {
        constrained_decode(&softmax_rows(emissions), &self.rules)
    }
}

pub type HeadFactory = fn(&HeadSpec, &mut ParamStore) -> Result<Box<dyn SequenceHead>>;

pub struct HeadRegistry {
    factories: BTreeMap<String, HeadFactory>,
}

impl HeadRegistry {
    pub fn empty() -> Self {
        HeadRegistry {
            factories: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, name: impl Into<String>, factory: HeadFactory) {
        self.factories.insert(name.into(), factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn build(&self, name: &str, spec: &HeadSpec, store: &mut ParamStore) -> Result<Box<dyn SequenceHead>> {
        let factory = self.factories.get(name).ok_or_else(|| {
            Error::Config(format!(
                "unknown sequence head {name:?} (known: {})",
                self.names().collect::<Vec<_>>().join(", ")
            ))
        })?;
        factory(spec, store)
    }
}

impl Default for HeadRegistry {
    fn default() -> Self {
        let mut r = Self::empty();
        r.register(CrfHead::NAME, CrfHead::build);
        r.register(RulesHead::NAME, RulesHead::build);
        r
    }
}

impl fmt::Debug for HeadRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.factories.keys()).finish()
    }
}
