//! Second-stage correction for the most-confused label pair.
//!
//! Sentences the base model assigns to either label of the pair are routed
//! through a small 3-class network (pair_a, pair_b, OTHER) that looks only
//! at the base model's 5-way score vector and may re-label them.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{argmax, Checkpoint, NodeId, ParamStore, Tape, Tensor};
use crate::corpus::Label;
use crate::docmodel::cross_entropy;
use crate::error::{Error, Result};
use crate::eval::ConfusionMatrix;
use crate::layers::Dense;
use crate::optim::{Adam, AdamConfig};
use crate::ModelRng;

const HEADER_KIND: &str = "ssn-correction";
/// Index of the OTHER class in the network output.
pub const OTHER: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusedPair {
    pub a: Label,
    pub b: Label,
    pub mass: u64,
}

impl ConfusedPair {
    pub fn contains(&self, label: Label) -> bool {
        label == self.a || label == self.b
    }

    /// Network class of a gold label: 0 for `a`, 1 for `b`, OTHER otherwise.
    pub fn class_of(&self, label: Label) -> usize {
        if label == self.a {
            0
        } else if label == self.b {
            1
        } else {
            OTHER
        }
    }
}

/// The unordered pair with the largest `CM[a][b] + CM[b][a]`; ties go to
/// the lexicographically smaller index pair.
pub fn select_confused_pair(cm: &ConfusionMatrix) -> Result<ConfusedPair> {
    let mut best: Option<ConfusedPair> = None;
    for i in 0..Label::COUNT {
        for j in i + 1..Label::COUNT {
            let mass = cm.counts[i][j] + cm.counts[j][i];
            if mass > 0 && best.is_none_or(|b| mass > b.mass) {
                best = Some(ConfusedPair {
                    a: Label::ALL[i],
                    b: Label::ALL[j],
                    mass,
                });
            }
        }
    }
    best.ok_or_else(|| Error::Data("no confusion: every off-diagonal count is zero".into()))
}

/// `Some(v)` exactly when the base prediction falls in the pair.
pub fn route<'v>(v: &'v [f64], predicted: Label, pair: &ConfusedPair) -> Option<&'v [f64]> {
    pair.contains(predicted).then_some(v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoutedExample {
    pub scores: Vec<f64>,
    pub target: usize,
}

/// Training examples from base predictions on a held-out corpus: one per
/// routed sentence, targeted at its gold label or OTHER.
pub fn build_training_set(
    predicted: &[Label],
    scores: &[Vec<f64>],
    gold: &[Label],
    pair: &ConfusedPair,
) -> Result<Vec<RoutedExample>> {
    if predicted.len() != scores.len() || predicted.len() != gold.len() {
        return Err(Error::InvalidArgument("predictions, scores and gold differ in length".into()));
    }
    let set: Vec<RoutedExample> = predicted
        .iter()
        .zip(scores)
        .zip(gold)
        .filter_map(|((&p, v), &g)| {
            route(v, p, pair).map(|v| RoutedExample {
                scores: v.to_vec(),
                target: pair.class_of(g),
            })
        })
        .collect();
    if set.is_empty() {
        return Err(Error::Data(format!(
            "no sentence was predicted as {} or {}",
            pair.a, pair.b
        )));
    }
    Ok(set)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mlp2Config {
    pub hidden: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    /// Share of routed examples held out for early stopping.
    pub validation_fraction: f64,
}

impl Default for Mlp2Config {
    fn default() -> Self {
        Mlp2Config {
            hidden: 16,
            learning_rate: 1e-3,
            max_epochs: 200,
            patience: 5,
            validation_fraction: 0.2,
        }
    }
}

/// `5 -> hidden (tanh) -> 3` with softmax output.
#[derive(Debug, Clone)]
pub struct Mlp2 {
    pub store: ParamStore,
    pub hidden: Dense,
    pub output: Dense,
    pub pair: ConfusedPair,
}

impl Mlp2 {
    pub fn new(pair: ConfusedPair, hidden: usize, rng: &mut ModelRng) -> Result<Self> {
        if hidden == 0 {
            return Err(Error::Config("MLP hidden size must be >= 1".into()));
        }
        let mut store = ParamStore::new();
        let h = Dense::new(&mut store, "mlp2.hidden", Label::COUNT, hidden, rng)?;
        let o = Dense::new(&mut store, "mlp2.output", hidden, 3, rng)?;
        Ok(Mlp2 {
            store,
            hidden: h,
            output: o,
            pair,
        })
    }

    /// Raw logits `n x 3` for score vectors stacked as the columns of `xs`.
    pub fn logits(&self, tape: &mut Tape, xs: NodeId) -> Result<NodeId> {
        let h = self.hidden.forward(tape, xs)?;
        let h = tape.tanh(h)?;
        let o = self.output.forward(tape, h)?;
        tape.transpose(o)
    }

    pub fn probabilities(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != Label::COUNT {
            return Err(Error::Shape(format!("score vector of length {}", v.len())));
        }
        let mut tape = Tape::new(&self.store);
        let x = tape.constant(Tensor::column(v.to_vec())?);
        let l = self.logits(&mut tape, x)?;
        let p = tape.softmax_rows(l)?;
        Ok(tape.value(p).data().to_vec())
    }

    fn columns(examples: &[&RoutedExample]) -> Result<Tensor> {
        let n = examples.len();
        let mut data = vec![0.0; Label::COUNT * n];
        for (j, ex) in examples.iter().enumerate() {
            if ex.scores.len() != Label::COUNT {
                return Err(Error::Shape(format!("score vector of length {}", ex.scores.len())));
            }
            for (k, &x) in ex.scores.iter().enumerate() {
                data[k * n + j] = x;
            }
        }
        Tensor::matrix(Label::COUNT, n, data)
    }

    /// Summed cross-entropy over `examples`.
    pub fn loss(&self, tape: &mut Tape, examples: &[&RoutedExample]) -> Result<NodeId> {
        let x = tape.constant(Self::columns(examples)?);
        let logits = self.logits(tape, x)?;
        let targets: Vec<usize> = examples.iter().map(|e| e.target).collect();
        cross_entropy(tape, logits, &targets)
    }

    fn mean_loss(&self, examples: &[&RoutedExample]) -> Result<f64> {
        let mut tape = Tape::new(&self.store);
        let l = self.loss(&mut tape, examples)?;
        Ok(tape.scalar(l)? / examples.len() as f64)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let header = serde_json::json!({
            "kind": HEADER_KIND,
            "pair": self.pair,
            "classes": [self.pair.a.as_str(), self.pair.b.as_str(), "OTHER"],
            "hidden": self.hidden.output_dim,
        });
        Checkpoint::from_store(&self.store, header.to_string())
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let header: serde_json::Value = serde_json::from_str(&ckpt.header)
            .map_err(|e| Error::Checkpoint(format!("header is not JSON: {e}")))?;
        if header["kind"] != HEADER_KIND {
            return Err(Error::Checkpoint("not a correction checkpoint".into()));
        }
        let pair: ConfusedPair = serde_json::from_value(header["pair"].clone())
            .map_err(|e| Error::Checkpoint(format!("bad pair in header: {e}")))?;
        let hidden = header["hidden"]
            .as_u64()
            .ok_or_else(|| Error::Checkpoint("missing hidden size".into()))? as usize;
        let mut mlp = Mlp2::new(pair, hidden, &mut ModelRng::seed_from_u64(0))?;
        ckpt.restore_into(&mut mlp.store)?;
        Ok(mlp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mlp2Summary {
    pub epochs: usize,
    pub best_epoch: usize,
    pub best_validation_loss: f64,
}

/// Per-example Adam updates with early stopping on held-out loss; the best
/// parameters seen are kept. Sets smaller than five examples train on
/// everything and stop only at `max_epochs`.
pub fn train_mlp2(
    examples: &[RoutedExample],
    pair: ConfusedPair,
    config: &Mlp2Config,
    rng: &mut ModelRng,
) -> Result<(Mlp2, Mlp2Summary)> {
    if examples.is_empty() {
        return Err(Error::Data("empty correction training set".into()));
    }
    let mut mlp = Mlp2::new(pair, config.hidden, rng)?;
    let mut adam = Adam::new(AdamConfig {
        learning_rate: config.learning_rate,
        ..AdamConfig::default()
    })?;
    let mut refs: Vec<&RoutedExample> = examples.iter().collect();
    refs.shuffle(rng);
    let held = if examples.len() < 5 {
        0
    } else {
        ((examples.len() as f64 * config.validation_fraction).round() as usize).clamp(1, examples.len() - 1)
    };
    let (val, train) = refs.split_at(held);
    let val = if val.is_empty() { train } else { val };
    let mut train = train.to_vec();

    let mut best = (mlp.store.clone(), mlp.mean_loss(val)?, 0usize);
    let mut epochs = 0;
    let mut stale = 0;
    while epochs < config.max_epochs {
        epochs += 1;
        train.shuffle(rng);
        for ex in &train {
            let grads = {
                let mut tape = Tape::new(&mlp.store);
                let l = mlp.loss(&mut tape, &[*ex])?;
                tape.backward(l)?
            };
            mlp.store.accumulate(&grads);
            adam.step(&mut mlp.store)?;
        }
        let loss = mlp.mean_loss(val)?;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("correction loss is {loss} at epoch {epochs}")));
        }
        if loss < best.1 {
            best = (mlp.store.clone(), loss, epochs);
            stale = 0;
        } else {
            stale += 1;
            if held > 0 && stale >= config.patience {
                break;
            }
        }
    }
    mlp.store = best.0;
    Ok((
        mlp,
        Mlp2Summary {
            epochs,
            best_epoch: best.2,
            best_validation_loss: best.1,
        },
    ))
}

/// Re-label routed positions. An OTHER verdict falls back to the
/// highest-scoring label outside the pair in the base score vector.
pub fn apply_correction(base: &[Label], scores: &[Vec<f64>], mlp: &Mlp2) -> Result<Vec<Label>> {
    if base.len() != scores.len() {
        return Err(Error::InvalidArgument(format!(
            "{} labels but {} score vectors",
            base.len(),
            scores.len()
        )));
    }
    let pair = &mlp.pair;
    base.iter()
        .zip(scores)
        .map(|(&label, v)| match route(v, label, pair) {
            None => Ok(label),
            Some(v) => Ok(corrected_label(&mlp.probabilities(v)?, v, pair)),
        })
        .collect()
}

/// Label chosen for a routed sentence given network output `p`.
pub fn corrected_label(p: &[f64], v: &[f64], pair: &ConfusedPair) -> Label {
    match argmax(p) {
        0 => pair.a,
        1 => pair.b,
        _ => {
            let others: Vec<Label> = Label::ALL.into_iter().filter(|&l| !pair.contains(l)).collect();
            let best = argmax(&others.iter().map(|l| v[l.index()]).collect::<Vec<_>>());
            others[best]
        }
    }
}
